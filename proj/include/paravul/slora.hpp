#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "paravul/corpus.hpp"
#include "paravul/matrix.hpp"

namespace paravul {

/// Symmetric 8-bit per-tensor quantize/dequantize: scale = max|W| / 127,
/// W_q = round(W / scale) * scale. An all-zero W maps to zeros.
Matrix quantize_base(const Matrix& w);

/// floor((1 - alpha) d^2).
std::size_t retained_count(std::size_t d, double alpha);

/// Top-k magnitude mask over a square matrix.
struct SparseMask {
    Matrix mask;                      // 0/1 entries
    std::vector<std::size_t> active;  // row-major flat indices of the ones, ascending
    std::size_t k = 0;
};

/// Keeps the k = floor((1 - alpha) d^2) entries of largest |S|. Equal
/// magnitudes are ranked by row-major position, earlier first.
SparseMask sparsify(const Matrix& s, double alpha);

/// x (U V), evaluated as (x U) V.
Matrix lowrank_forward(const Matrix& x, const Matrix& u, const Matrix& v, std::uint64_t* mults = nullptr);

/// x (S ⊙ M), touching only the active entries of the mask.
Matrix sparse_forward(const Matrix& x, const Matrix& s, const SparseMask& mask, std::uint64_t* mults = nullptr);

/// Frozen quantized base plus trainable low-rank (U, V) and sparse (S) adapters.
class AdapterLayer {
public:
    /// Quantizes `base`. U ~ small uniform, V = 0, S ~ U[-0.01, 0.01].
    AdapterLayer(const Matrix& base, std::size_t rank, double alpha, std::uint64_t seed);

    /// Reassembles a layer from stored tensors; `base_q` is taken as already quantized.
    static AdapterLayer from_parts(Matrix base_q, Matrix u, Matrix v, Matrix s, double alpha);

    std::size_t dim() const noexcept { return base_.rows(); }
    std::size_t rank() const noexcept { return u_.cols(); }
    double alpha() const noexcept { return alpha_; }

    const Matrix& base() const noexcept { return base_; }
    const Matrix& u() const noexcept { return u_; }
    const Matrix& v() const noexcept { return v_; }
    const Matrix& s() const noexcept { return s_; }
    Matrix& u() noexcept { return u_; }
    Matrix& v() noexcept { return v_; }
    Matrix& s() noexcept { return s_; }

    const SparseMask& mask() const noexcept { return mask_; }
    void refresh_mask() { mask_ = sparsify(s_, alpha_); }

    /// FNV-1a of the base tensor's bytes.
    std::uint64_t base_hash() const;

    /// x W_q + x U V + x (S ⊙ M). Only the two adapter paths are counted in
    /// *incremental_mults.
    Matrix forward(const Matrix& x, std::uint64_t* incremental_mults = nullptr) const;

private:
    AdapterLayer() = default;
    void check() const;

    Matrix base_;
    Matrix u_;
    Matrix v_;
    Matrix s_;
    double alpha_ = 0.0;
    SparseMask mask_;
};

inline Matrix adapter_forward(const Matrix& x, const AdapterLayer& layer) {
    return layer.forward(x);
}

/// n (2 d r + k): multiplies spent on the low-rank and sparse paths.
std::uint64_t flop_count(const AdapterLayer& layer, std::size_t n);

constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy over the labels, probabilities clamped to [eps, 1 - eps].
double bce_loss(const LabelVector& y, std::span<const double> yhat);
double bce_loss(std::span<const double> y, std::span<const double> yhat);

struct TrainConfig {
    double learning_rate = 5e-5;
    std::size_t batch_size = 8;
    std::size_t epochs = 5;
    std::size_t patience = 0;  // 0 disables early stopping
    std::uint64_t seed = 0;

    void validate() const;
};

struct Sample {
    std::vector<double> features;
    LabelVector labels;
};

/// Adapter layer followed by a sigmoid readout head d -> L.
class SloraClassifier {
public:
    struct Gradients {
        Matrix u;
        Matrix v;
        Matrix s;  // zero outside the active mask
        Matrix head_w;
        std::vector<double> head_b;
    };

    SloraClassifier(AdapterLayer adapter, Matrix head_w, std::vector<double> head_b);

    /// Random base N(0, 1/d) and head U[-1/sqrt(d), 1/sqrt(d)], all from `seed`.
    static SloraClassifier create(std::size_t dim, std::size_t labels, std::size_t rank, double alpha,
                                  std::uint64_t seed);

    std::size_t dim() const noexcept { return adapter_.dim(); }
    std::size_t label_count() const noexcept { return head_b_.size(); }

    AdapterLayer& adapter() noexcept { return adapter_; }
    const AdapterLayer& adapter() const noexcept { return adapter_; }
    Matrix& head_w() noexcept { return head_w_; }
    const Matrix& head_w() const noexcept { return head_w_; }
    std::vector<double>& head_b() noexcept { return head_b_; }
    const std::vector<double>& head_b() const noexcept { return head_b_; }

    /// n x L probabilities.
    Matrix predict(const Matrix& x) const;
    std::vector<double> predict(std::span<const double> features) const;

    /// Mean over rows of the per-row BCE; `y` is n x L with 0/1 entries.
    double loss(const Matrix& x, const Matrix& y) const;
    /// Gradients of loss() at the current mask.
    Gradients gradients(const Matrix& x, const Matrix& y) const;

private:
    AdapterLayer adapter_;
    Matrix head_w_;
    std::vector<double> head_b_;
};

struct TrainResult {
    std::vector<double> loss_trace;        // mean training loss per epoch
    std::vector<double> validation_trace;  // empty when no validation set was given
    bool early_stopped = false;
};

/// Mini-batch gradient descent on U, V, S and the head; the base is never
/// written. The mask is recomputed from |S| before every batch. Early
/// stopping watches validation loss, or training loss without a
/// validation set.
TrainResult train(SloraClassifier& model, std::span<const Sample> data, const TrainConfig& config,
                  std::span<const Sample> validation = {});

/// Stacks samples into (features, targets) matrices.
std::pair<Matrix, Matrix> to_matrices(std::span<const Sample> samples);

struct SloraCheckpoint {
    SloraClassifier model;
    Taxonomy taxonomy;
    std::uint64_t feature_seed = 0;

    void save(const std::filesystem::path& path) const;
    static SloraCheckpoint load(const std::filesystem::path& path);
};

void write_loss_trace_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace paravul
