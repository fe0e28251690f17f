#include "paravul/slora.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"
#include "paravul/hashing.hpp"
#include "paravul/random.hpp"

namespace paravul {

using nlohmann::json;

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorKind::ShapeError, std::string(what) + " must be square");
    }
}

}  // namespace

Matrix quantize_base(const Matrix& w) {
    const double max_abs = w.max_abs();
    Matrix q(w.rows(), w.cols());
    if (max_abs == 0.0) {
        return q;
    }
    const double scale = max_abs / 127.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        q.data()[i] = std::round(w.data()[i] / scale) * scale;
    }
    return q;
}

std::size_t retained_count(std::size_t d, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "sparsity level must lie in [0, 1]");
    }
    const double cells = static_cast<double>(d) * static_cast<double>(d);
    // The small slack absorbs representation error, e.g. (1 - 0.9) * 100 = 9.999...
    const auto k = static_cast<std::size_t>(std::floor((1.0 - alpha) * cells + 1e-9));
    return std::min(k, d * d);
}

SparseMask sparsify(const Matrix& s, double alpha) {
    require_square(s, "sparse adapter");
    SparseMask out;
    out.k = retained_count(s.rows(), alpha);
    out.mask = Matrix(s.rows(), s.cols());
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& v = s.data();
    // Strict total order (magnitude, then position), so the selected set is unique.
    const auto kth = order.begin() + static_cast<std::ptrdiff_t>(out.k);
    if (kth != order.end()) {
        std::nth_element(order.begin(), kth, order.end(), [&](std::size_t a, std::size_t b) {
            const double ma = std::abs(v[a]);
            const double mb = std::abs(v[b]);
            return ma != mb ? ma > mb : a < b;
        });
    }
    out.active.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(out.k));
    std::sort(out.active.begin(), out.active.end());
    for (auto idx : out.active) {
        out.mask.data()[idx] = 1.0;
    }
    return out;
}

Matrix lowrank_forward(const Matrix& x, const Matrix& u, const Matrix& v, std::uint64_t* mults) {
    if (x.cols() != u.rows() || u.cols() != v.rows() || v.cols() != u.rows()) {
        throw Error(ErrorKind::ShapeError, "low-rank path expects x: n x d, U: d x r, V: r x d");
    }
    return matmul(matmul(x, u, mults), v, mults);
}

Matrix sparse_forward(const Matrix& x, const Matrix& s, const SparseMask& mask, std::uint64_t* mults) {
    require_square(s, "sparse adapter");
    if (x.cols() != s.rows() || mask.mask.rows() != s.rows() || mask.mask.cols() != s.cols()) {
        throw Error(ErrorKind::ShapeError, "sparse path expects x: n x d, S and M: d x d");
    }
    const std::size_t d = s.cols();
    Matrix out(x.rows(), d);
    for (auto idx : mask.active) {
        const std::size_t i = idx / d;
        const std::size_t j = idx % d;
        const double sij = s.data()[idx];
        for (std::size_t r = 0; r < x.rows(); ++r) {
            out(r, j) += x(r, i) * sij;
        }
    }
    if (mults) {
        *mults += static_cast<std::uint64_t>(x.rows()) * mask.active.size();
    }
    return out;
}

AdapterLayer::AdapterLayer(const Matrix& base, std::size_t rank, double alpha, std::uint64_t seed)
    : base_(quantize_base(base)), alpha_(alpha) {
    require_square(base, "base weight");
    const std::size_t d = base.rows();
    if (rank < 1 || rank > d) {
        throw Error(ErrorKind::InvalidParameter, "rank must satisfy 1 <= r <= d");
    }
    Rng rng(seed);
    const double u_scale = 1.0 / std::sqrt(static_cast<double>(d));
    u_ = Matrix(d, rank);
    for (double& x : u_.data()) {
        x = rng.uniform(-u_scale, u_scale);
    }
    v_ = Matrix(rank, d);
    s_ = Matrix(d, d);
    for (double& x : s_.data()) {
        x = rng.uniform(-0.01, 0.01);
    }
    check();
    refresh_mask();
}

AdapterLayer AdapterLayer::from_parts(Matrix base_q, Matrix u, Matrix v, Matrix s, double alpha) {
    AdapterLayer layer;
    layer.base_ = std::move(base_q);
    layer.u_ = std::move(u);
    layer.v_ = std::move(v);
    layer.s_ = std::move(s);
    layer.alpha_ = alpha;
    layer.check();
    layer.refresh_mask();
    return layer;
}

void AdapterLayer::check() const {
    require_square(base_, "base weight");
    const std::size_t d = base_.rows();
    if (u_.rows() != d || v_.cols() != d || u_.cols() != v_.rows() || s_.rows() != d || s_.cols() != d) {
        throw Error(ErrorKind::ShapeError, "adapter tensors do not conform to the base dimension");
    }
    if (u_.cols() < 1 || u_.cols() > d) {
        throw Error(ErrorKind::InvalidParameter, "rank must satisfy 1 <= r <= d");
    }
    if (!(alpha_ >= 0.0 && alpha_ <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "sparsity level must lie in [0, 1]");
    }
}

std::uint64_t AdapterLayer::base_hash() const {
    return fnv1a_bytes(std::as_bytes(std::span(base_.data())));
}

Matrix AdapterLayer::forward(const Matrix& x, std::uint64_t* incremental_mults) const {
    Matrix out = matmul(x, base_);
    out = out + lowrank_forward(x, u_, v_, incremental_mults);
    return out + sparse_forward(x, s_, mask_, incremental_mults);
}

std::uint64_t flop_count(const AdapterLayer& layer, std::size_t n) {
    const std::uint64_t d = layer.dim();
    const std::uint64_t r = layer.rank();
    return static_cast<std::uint64_t>(n) * (2 * d * r + layer.mask().k);
}

double bce_loss(std::span<const double> y, std::span<const double> yhat) {
    if (y.size() != yhat.size()) {
        throw Error(ErrorKind::ShapeError, "BCE targets and predictions differ in length");
    }
    if (y.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::clamp(yhat[i], kBceEpsilon, 1.0 - kBceEpsilon);
        sum += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return -sum / static_cast<double>(y.size());
}

double bce_loss(const LabelVector& y, std::span<const double> yhat) {
    std::vector<double> t(y.bits().begin(), y.bits().end());
    return bce_loss(t, yhat);
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || batch_size < 1 || epochs < 1) {
        throw Error(ErrorKind::InvalidParameter, "training needs learning_rate >= 0, batch_size >= 1, epochs >= 1");
    }
}

SloraClassifier::SloraClassifier(AdapterLayer adapter, Matrix head_w, std::vector<double> head_b)
    : adapter_(std::move(adapter)), head_w_(std::move(head_w)), head_b_(std::move(head_b)) {
    if (head_w_.rows() != adapter_.dim() || head_w_.cols() != head_b_.size()) {
        throw Error(ErrorKind::ShapeError, "readout head must be d x L with L biases");
    }
}

SloraClassifier SloraClassifier::create(std::size_t dim, std::size_t labels, std::size_t rank, double alpha,
                                        std::uint64_t seed) {
    Rng rng(seed);
    Matrix base(dim, dim);
    const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& x : base.data()) {
        x = sd * rng.normal();
    }
    AdapterLayer adapter(base, rank, alpha, rng.next());
    Matrix head(dim, labels);
    for (double& x : head.data()) {
        x = rng.uniform(-sd, sd);
    }
    return SloraClassifier(std::move(adapter), std::move(head), std::vector<double>(labels, 0.0));
}

Matrix SloraClassifier::predict(const Matrix& x) const {
    Matrix logits = matmul(adapter_.forward(x), head_w_);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            logits(r, j) = sigmoid(logits(r, j) + head_b_[j]);
        }
    }
    return logits;
}

std::vector<double> SloraClassifier::predict(std::span<const double> features) const {
    Matrix x(1, features.size(), std::vector<double>(features.begin(), features.end()));
    return predict(x).data();
}

double SloraClassifier::loss(const Matrix& x, const Matrix& y) const {
    const Matrix p = predict(x);
    if (p.rows() != y.rows() || p.cols() != y.cols()) {
        throw Error(ErrorKind::ShapeError, "target matrix does not match predictions");
    }
    double sum = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        sum += bce_loss(y.row(r), p.row(r));
    }
    return p.rows() == 0 ? 0.0 : sum / static_cast<double>(p.rows());
}

SloraClassifier::Gradients SloraClassifier::gradients(const Matrix& x, const Matrix& y) const {
    const std::size_t n = x.rows();
    const std::size_t d = dim();
    const std::size_t labels = label_count();
    if (y.rows() != n || y.cols() != labels || x.cols() != d) {
        throw Error(ErrorKind::ShapeError, "gradient inputs do not match the model");
    }

    const Matrix xu = matmul(x, adapter_.u());
    Matrix hidden = matmul(x, adapter_.base()) + matmul(xu, adapter_.v());
    hidden = hidden + sparse_forward(x, adapter_.s(), adapter_.mask());

    // dL/dlogit for sigmoid + BCE, averaged over labels and rows.
    Matrix g = matmul(hidden, head_w_);
    const double norm = 1.0 / (static_cast<double>(labels) * static_cast<double>(std::max<std::size_t>(n, 1)));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < labels; ++j) {
            g(r, j) = (sigmoid(g(r, j) + head_b_[j]) - y(r, j)) * norm;
        }
    }

    Gradients out;
    out.head_w = matmul(hidden.transposed(), g);
    out.head_b.assign(labels, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < labels; ++j) {
            out.head_b[j] += g(r, j);
        }
    }
    const Matrix d_hidden = matmul(g, head_w_.transposed());  // n x d
    const Matrix xt = x.transposed();
    out.v = matmul(xu.transposed(), d_hidden);
    out.u = matmul(xt, matmul(d_hidden, adapter_.v().transposed()));
    out.s = Matrix(d, d);
    for (auto idx : adapter_.mask().active) {
        const std::size_t i = idx / d;
        const std::size_t j = idx % d;
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            acc += x(r, i) * d_hidden(r, j);
        }
        out.s.data()[idx] = acc;
    }
    return out;
}

std::pair<Matrix, Matrix> to_matrices(std::span<const Sample> samples) {
    if (samples.empty()) {
        return {};
    }
    const std::size_t d = samples.front().features.size();
    const std::size_t labels = samples.front().labels.size();
    Matrix x(samples.size(), d);
    Matrix y(samples.size(), labels);
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const auto& s = samples[r];
        if (s.features.size() != d || s.labels.size() != labels) {
            throw Error(ErrorKind::ShapeError, "samples differ in feature or label length");
        }
        std::copy(s.features.begin(), s.features.end(), x.row(r).begin());
        for (std::size_t j = 0; j < labels; ++j) {
            y(r, j) = s.labels.test(j) ? 1.0 : 0.0;
        }
    }
    return {std::move(x), std::move(y)};
}

namespace {

void step(Matrix& param, const Matrix& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        param.data()[i] -= lr * grad.data()[i];
    }
}

}  // namespace

namespace {

bool finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

TrainResult train(SloraClassifier& model, std::span<const Sample> data, const TrainConfig& config,
                  std::span<const Sample> validation) {
    if (data.empty()) {
        throw Error(ErrorKind::EmptyDataset, "cannot train on an empty dataset");
    }
    config.validate();
    auto [all_x, all_y] = to_matrices(data);
    if (all_x.cols() != model.dim() || all_y.cols() != model.label_count()) {
        throw Error(ErrorKind::ShapeError, "training samples do not match the model shape");
    }
    std::pair<Matrix, Matrix> val;
    if (!validation.empty()) {
        val = to_matrices(validation);
    }

    Rng rng(config.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    const double lr = config.learning_rate;
    const std::size_t d = model.dim();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            Matrix bx(end - begin, d);
            Matrix by(end - begin, model.label_count());
            for (std::size_t r = begin; r < end; ++r) {
                std::copy(all_x.row(order[r]).begin(), all_x.row(order[r]).end(), bx.row(r - begin).begin());
                std::copy(all_y.row(order[r]).begin(), all_y.row(order[r]).end(), by.row(r - begin).begin());
            }
            model.adapter().refresh_mask();
            epoch_loss += model.loss(bx, by) * static_cast<double>(end - begin);
            const auto g = model.gradients(bx, by);
            step(model.adapter().u(), g.u, lr);
            step(model.adapter().v(), g.v, lr);
            for (auto idx : model.adapter().mask().active) {
                model.adapter().s().data()[idx] -= lr * g.s.data()[idx];
            }
            step(model.head_w(), g.head_w, lr);
            for (std::size_t j = 0; j < g.head_b.size(); ++j) {
                model.head_b()[j] -= lr * g.head_b[j];
            }
        }
        model.adapter().refresh_mask();
        result.loss_trace.push_back(epoch_loss / static_cast<double>(data.size()));
        if (!std::isfinite(result.loss_trace.back()) || !finite(model.adapter().u()) ||
            !finite(model.adapter().v()) || !finite(model.adapter().s()) || !finite(model.head_w())) {
            throw Error(ErrorKind::NumericError, "SLoRA training diverged in epoch " + std::to_string(epoch + 1) +
                                                     "; lower the learning rate");
        }

        double monitored = result.loss_trace.back();
        if (!validation.empty()) {
            monitored = model.loss(val.first, val.second);
            result.validation_trace.push_back(monitored);
        }
        if (config.patience > 0) {
            if (monitored < best) {
                best = monitored;
                stale = 0;
            } else if (++stale >= config.patience) {
                result.early_stopped = true;
                break;
            }
        }
    }
    return result;
}

namespace {

json matrix_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

}  // namespace

void SloraCheckpoint::save(const std::filesystem::path& path) const {
    const auto& a = model.adapter();
    json j;
    j["format"] = "paravul-slora";
    j["version"] = 1;
    j["alpha"] = a.alpha();
    j["rank"] = a.rank();
    j["dim"] = a.dim();
    j["base_q"] = matrix_json(a.base());
    j["u"] = matrix_json(a.u());
    j["v"] = matrix_json(a.v());
    j["s"] = matrix_json(a.s());
    j["head_w"] = matrix_json(model.head_w());
    j["head_b"] = model.head_b();
    j["taxonomy"] = taxonomy.names();
    j["feature_seed"] = feature_seed;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

SloraCheckpoint SloraCheckpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    try {
        const json j = json::parse(in);
        if (j.at("format") != "paravul-slora" || j.at("version") != 1) {
            throw Error(ErrorKind::ParseError, path.string() + ": not a SLoRA checkpoint");
        }
        auto layer = AdapterLayer::from_parts(matrix_from(j.at("base_q")), matrix_from(j.at("u")),
                                              matrix_from(j.at("v")), matrix_from(j.at("s")),
                                              j.at("alpha").get<double>());
        SloraClassifier model(std::move(layer), matrix_from(j.at("head_w")),
                              j.at("head_b").get<std::vector<double>>());
        return {std::move(model), Taxonomy(j.at("taxonomy").get<std::vector<std::string>>()),
                j.at("feature_seed").get<std::uint64_t>()};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_loss_trace_csv(const TrainResult& result, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << "epoch,train_loss,validation_loss\n";
    out.precision(17);
    for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
        out << e + 1 << ',' << result.loss_trace[e] << ',';
        if (e < result.validation_trace.size()) {
            out << result.validation_trace[e];
        }
        out << '\n';
    }
}

}  // namespace paravul
