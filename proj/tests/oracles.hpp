#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "paravul/random.hpp"
#include "paravul/slora.hpp"

namespace oracle {

using paravul::Matrix;

/// x (W_q + U V + S ⊙ M) by explicit triple loops over the dense d x d sum.
inline Matrix adapter_dense(const Matrix& x, const paravul::AdapterLayer& layer) {
    const std::size_t d = layer.dim();
    const std::size_t r = layer.rank();
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double uv = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                uv += layer.u()(i, k) * layer.v()(k, j);
            }
            w(i, j) = layer.base()(i, j) + uv + layer.s()(i, j) * layer.mask().mask(i, j);
        }
    }
    Matrix out(x.rows(), d);
    for (std::size_t n = 0; n < x.rows(); ++n) {
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                acc += x(n, i) * w(i, j);
            }
            out(n, j) = acc;
        }
    }
    return out;
}

/// floor((1 - p/q) d^2) in integer arithmetic.
inline std::size_t retained(std::size_t d, std::uint64_t p, std::uint64_t q) {
    return static_cast<std::size_t>((q - p) * d * d / q);
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Largest relative error between analytic gradients and central differences
/// over every trainable tensor of the classifier.
inline double slora_gradient_error(paravul::SloraClassifier model, const Matrix& x, const Matrix& y,
                                   double step = 1e-5) {
    const auto g = model.gradients(x, y);
    double worst = 0.0;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& analytic) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + step;
            const double up = model.loss(x, y);
            params[i] = saved - step;
            const double down = model.loss(x, y);
            params[i] = saved;
            worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
        }
    };
    probe(model.adapter().u().data(), g.u.data());
    probe(model.adapter().v().data(), g.v.data());
    probe(model.adapter().s().data(), g.s.data());
    probe(model.head_w().data(), g.head_w.data());
    probe(model.head_b(), g.head_b);
    return worst;
}

/// Random classifier with every tensor non-zero, so all gradient paths are live.
inline paravul::SloraClassifier random_classifier(paravul::Rng& rng, std::size_t d, std::size_t r, std::size_t labels,
                                                  double alpha) {
    auto model = paravul::SloraClassifier::create(d, labels, r, alpha, rng.next());
    for (double& v : model.adapter().v().data()) {
        v = rng.uniform(-0.5, 0.5);
    }
    for (double& s : model.adapter().s().data()) {
        s = rng.uniform(-0.5, 0.5);
    }
    model.adapter().refresh_mask();
    for (double& b : model.head_b()) {
        b = rng.uniform(-0.2, 0.2);
    }
    return model;
}

inline Matrix random_matrix(paravul::Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.uniform(-scale, scale);
    }
    return m;
}

inline Matrix random_targets(paravul::Rng& rng, std::size_t rows, std::size_t labels) {
    Matrix m(rows, labels);
    for (double& v : m.data()) {
        v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    return m;
}

/// Linearly separable multi-label task: label j = [w_j . x > 0] with a margin.
inline std::vector<paravul::Sample> separable_task(paravul::Rng& rng, std::size_t d, std::size_t labels,
                                                   std::size_t count, double margin = 0.1) {
    std::vector<std::vector<double>> w(labels, std::vector<double>(d));
    for (auto& row : w) {
        double norm = 0.0;
        for (double& v : row) {
            v = rng.normal();
            norm += v * v;
        }
        for (double& v : row) {
            v /= std::sqrt(norm);
        }
    }
    std::vector<paravul::Sample> out;
    while (out.size() < count) {
        std::vector<double> x(d);
        for (double& v : x) {
            v = rng.normal() / std::sqrt(static_cast<double>(d));
        }
        paravul::LabelVector y(labels);
        bool clear = true;
        for (std::size_t j = 0; j < labels; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                dot += w[j][i] * x[i];
            }
            clear = clear && std::abs(dot) >= margin / std::sqrt(static_cast<double>(d));
            y.set(j, dot > 0.0);
        }
        if (clear) {
            out.push_back({std::move(x), std::move(y)});
        }
    }
    return out;
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline double micro_f1(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth) {
    Counts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < pred[i].size(); ++j) {
            c.tp += pred[i][j] && truth[i][j];
            c.fp += pred[i][j] && !truth[i][j];
            c.fn += !pred[i][j] && truth[i][j];
        }
    }
    const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

/// Straight transcription of the BM25 formula over raw token lists.
inline double bm25(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& query,
                   std::size_t d, double k1 = 1.5, double b = 0.9) {
    const double n = static_cast<double>(docs.size());
    double total_len = 0.0;
    for (const auto& doc : docs) {
        total_len += static_cast<double>(doc.size());
    }
    const double avg = total_len / n;
    double score = 0.0;
    for (const auto& q : query) {
        double nq = 0.0;
        for (const auto& doc : docs) {
            nq += std::find(doc.begin(), doc.end(), q) != doc.end() ? 1.0 : 0.0;
        }
        const double idf = std::log((n - nq + 0.5) / (nq + 0.5) + 1.0);
        const double f = static_cast<double>(std::count(docs[d].begin(), docs[d].end(), q));
        const double len = static_cast<double>(docs[d].size());
        score += idf * (k1 + 1.0) * f / (k1 * (1.0 - b + len * b / avg) + f);
    }
    return score;
}

}  // namespace oracle
