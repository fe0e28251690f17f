#include "paravul/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "paravul/error.hpp"
#include "paravul/random.hpp"
#include "paravul/slora.hpp"

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

struct Activations {
    std::vector<double> x;
    std::vector<double> z1, h1;
    std::vector<double> z2, h2;
    double p = 0.0;
};

Activations run_mlp(const MetaLearner& m, std::vector<double> x) {
    Activations a;
    a.x = std::move(x);
    const std::size_t n1 = m.hidden1();
    const std::size_t n2 = m.hidden2();
    a.z1.assign(n1, 0.0);
    a.h1.assign(n1, 0.0);
    for (std::size_t i = 0; i < n1; ++i) {
        double s = m.b1[i];
        for (std::size_t k = 0; k < a.x.size(); ++k) {
            s += m.w1(i, k) * a.x[k];
        }
        a.z1[i] = s;
        a.h1[i] = std::max(0.0, s);
    }
    a.z2.assign(n2, 0.0);
    a.h2.assign(n2, 0.0);
    for (std::size_t i = 0; i < n2; ++i) {
        double s = m.b2[i];
        for (std::size_t k = 0; k < n1; ++k) {
            s += m.w2(i, k) * a.h1[k];
        }
        a.z2[i] = s;
        a.h2[i] = std::max(0.0, s);
    }
    double z3 = m.b3;
    for (std::size_t k = 0; k < n2; ++k) {
        z3 += m.w3(0, k) * a.h2[k];
    }
    a.p = sigmoid(z3);
    return a;
}

}  // namespace

std::vector<double> fuse(std::span<const double> weights, std::span<const double> predictions) {
    if (weights.size() != predictions.size()) {
        throw Error(ErrorKind::ShapeError, "fusion weights and predictions differ in length");
    }
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = weights[i] * predictions[i];
    }
    return out;
}

void MetaConfig::validate() const {
    if (hidden1 == 0 || hidden2 == 0 || batch_size == 0 || epochs == 0 || !(learning_rate >= 0.0) ||
        !(lambda >= 0.0) || !(threshold >= 0.0 && threshold <= 1.0)) {
        throw Error(ErrorKind::InvalidParameter, "invalid meta-learner configuration");
    }
}

MetaLearner::MetaLearner(std::size_t inputs, std::size_t hidden1, std::size_t hidden2)
    : weights(inputs, 1.0),
      w1(hidden1, inputs),
      b1(hidden1, 0.0),
      w2(hidden2, hidden1),
      b2(hidden2, 0.0),
      w3(1, hidden2) {
    if (inputs == 0 || hidden1 == 0 || hidden2 == 0) {
        throw Error(ErrorKind::InvalidParameter, "meta-learner sizes must be positive");
    }
}

MetaLearner MetaLearner::create(std::size_t inputs, std::size_t hidden1, std::size_t hidden2, std::uint64_t seed) {
    MetaLearner m(inputs, hidden1, hidden2);
    Rng rng(seed);
    auto init = [&rng](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
        for (double& x : w.data()) {
            x = rng.uniform(-limit, limit);
        }
    };
    init(m.w1);
    init(m.w2);
    init(m.w3);
    return m;
}

double MetaLearner::forward(std::span<const double> x, std::uint64_t* mults) const {
    if (x.size() != inputs()) {
        throw Error(ErrorKind::ShapeError, "meta-learner input has the wrong length");
    }
    const double p = run_mlp(*this, std::vector<double>(x.begin(), x.end())).p;
    if (mults) {
        *mults += inputs() * hidden1() + hidden1() * hidden2() + hidden2();
    }
    return p;
}

double MetaLearner::predict(std::span<const double> predictions) const {
    if (predictions.size() != inputs()) {
        throw Error(ErrorKind::ShapeError, "meta-learner input has the wrong length");
    }
    return run_mlp(*this, fuse(weights, predictions)).p;
}

double MetaLearner::loss(std::span<const MetaRow> rows) const {
    if (rows.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& r : rows) {
        const double p = predict(r.predictions);
        const double y[1] = {r.truth};
        const double q[1] = {p};
        sum += bce_loss(y, q);
    }
    return sum / static_cast<double>(rows.size());
}

std::size_t MetaLearner::parameter_count() const {
    return weights.size() + w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + 1;
}

std::vector<double> MetaLearner::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    flat.insert(flat.end(), weights.begin(), weights.end());
    flat.insert(flat.end(), w1.data().begin(), w1.data().end());
    flat.insert(flat.end(), b1.begin(), b1.end());
    flat.insert(flat.end(), w2.data().begin(), w2.data().end());
    flat.insert(flat.end(), b2.begin(), b2.end());
    flat.insert(flat.end(), w3.data().begin(), w3.data().end());
    flat.push_back(b3);
    return flat;
}

void MetaLearner::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) {
        throw Error(ErrorKind::ShapeError, "parameter vector has the wrong length");
    }
    auto it = flat.begin();
    auto take = [&it](auto& dst) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
        it += static_cast<std::ptrdiff_t>(dst.size());
    };
    take(weights);
    take(w1.data());
    take(b1);
    take(w2.data());
    take(b2);
    take(w3.data());
    b3 = *it;
}

std::vector<double> MetaLearner::gradient(std::span<const MetaRow> rows) const {
    const std::size_t psi = inputs();
    const std::size_t n1 = hidden1();
    const std::size_t n2 = hidden2();
    std::vector<double> gw(psi, 0.0), gw1(w1.size(), 0.0), gb1(n1, 0.0), gw2(w2.size(), 0.0), gb2(n2, 0.0),
        gw3(n2, 0.0);
    double gb3 = 0.0;
    const double inv_n = rows.empty() ? 0.0 : 1.0 / static_cast<double>(rows.size());

    std::vector<double> dz2(n2), dz1(n1);
    for (const auto& r : rows) {
        const auto a = run_mlp(*this, fuse(weights, r.predictions));
        const double dz3 = (a.p - r.truth) * inv_n;
        gb3 += dz3;
        for (std::size_t k = 0; k < n2; ++k) {
            gw3[k] += dz3 * a.h2[k];
            dz2[k] = a.z2[k] > 0.0 ? w3(0, k) * dz3 : 0.0;
            gb2[k] += dz2[k];
        }
        for (std::size_t k = 0; k < n1; ++k) {
            double dh = 0.0;
            for (std::size_t i = 0; i < n2; ++i) {
                gw2[i * n1 + k] += dz2[i] * a.h1[k];
                dh += w2(i, k) * dz2[i];
            }
            dz1[k] = a.z1[k] > 0.0 ? dh : 0.0;
            gb1[k] += dz1[k];
        }
        for (std::size_t c = 0; c < psi; ++c) {
            double dx = 0.0;
            for (std::size_t i = 0; i < n1; ++i) {
                gw1[i * psi + c] += dz1[i] * a.x[c];
                dx += w1(i, c) * dz1[i];
            }
            gw[c] += dx * r.predictions[c];
        }
    }
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto* part : {&gw, &gw1, &gb1, &gw2, &gb2, &gw3}) {
        flat.insert(flat.end(), part->begin(), part->end());
    }
    flat.push_back(gb3);
    return flat;
}

MetaTrainResult train_meta(std::span<const MetaRow> rows, const MetaConfig& config) {
    if (rows.empty()) {
        throw Error(ErrorKind::EmptyDataset, "cannot train the meta-learner on an empty dataset");
    }
    config.validate();
    const std::size_t psi = rows.front().predictions.size();
    for (const auto& r : rows) {
        if (r.predictions.size() != psi) {
            throw Error(ErrorKind::ShapeError, "meta rows differ in the number of base predictions");
        }
    }
    Rng rng(config.seed);
    MetaTrainResult result{MetaLearner::create(psi, config.hidden1, config.hidden2, rng.next()), {}};
    auto& m = result.learner;

    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<MetaRow> batch;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            batch.clear();
            for (std::size_t i = begin; i < end; ++i) {
                batch.push_back(rows[order[i]]);
            }
            auto params = m.parameters();
            const auto g = m.gradient(batch);
            for (std::size_t i = 0; i < params.size(); ++i) {
                params[i] -= config.learning_rate * g[i];
            }
            m.set_parameters(params);
        }
        result.loss_trace.push_back(m.loss(rows));
        if (!std::isfinite(result.loss_trace.back())) {
            throw Error(ErrorKind::NumericError, "meta-learner training diverged in epoch " + std::to_string(epoch + 1) +
                                                     "; lower the learning rate");
        }
    }
    return result;
}

std::vector<double> adapt_to_task(std::span<const double> weights, const TaskObjective& task, double lambda,
                                  const AdaptOptions& options) {
    if (!(lambda >= 0.0)) {
        throw Error(ErrorKind::InvalidParameter, "lambda must be non-negative");
    }
    const std::size_t n = weights.size();
    auto objective = [&](std::span<const double> v) {
        double reg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            reg += (v[i] - weights[i]) * (v[i] - weights[i]);
        }
        const double f = task.loss(v) + 0.5 * lambda * reg;
        if (!std::isfinite(f)) {
            throw Error(ErrorKind::NumericError, "proximal objective is not finite");
        }
        return f;
    };

    std::vector<double> v(weights.begin(), weights.end());
    std::vector<double> trial(n);
    double f = objective(v);
    double step = 1.0;
    const double stop = options.tolerance * std::max(1.0, lambda);
    for (std::size_t it = 0; it < options.max_iterations; ++it) {
        auto g = task.gradient(v);
        if (g.size() != n) {
            throw Error(ErrorKind::ShapeError, "task gradient has the wrong length");
        }
        double g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += lambda * (v[i] - weights[i]);
            if (!std::isfinite(g[i])) {
                throw Error(ErrorKind::NumericError, "proximal gradient is not finite");
            }
            g2 += g[i] * g[i];
        }
        if (std::sqrt(g2) <= stop) {
            break;
        }
        // Armijo backtracking; restart each search from twice the last accepted step.
        step = std::min(1.0, step * 2.0);
        bool accepted = false;
        while (step > 1e-300) {
            for (std::size_t i = 0; i < n; ++i) {
                trial[i] = v[i] - step * g[i];
            }
            const double ft = objective(trial);
            if (ft <= f - 0.5 * step * g2) {
                v.swap(trial);
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;  // no representable descent step left
        }
    }
    return v;
}

std::vector<double> gather_predictions(std::span<const DetectionResult> results, std::size_t label) {
    std::vector<double> y(results.size(), kImputedProbability);
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].ok()) {
            y[i] = results[i].probabilities.at(label);
        }
    }
    return y;
}

Verification verify(const MetaLearner& learner, std::span<const DetectionResult> results, std::size_t label_count,
                    double threshold) {
    if (results.size() != learner.inputs()) {
        throw Error(ErrorKind::ShapeError, "verify got " + std::to_string(results.size()) + " results for a learner over " +
                                               std::to_string(learner.inputs()) + " detectors");
    }
    if (std::none_of(results.begin(), results.end(), [](const auto& r) { return r.ok(); })) {
        throw Error(ErrorKind::AllDetectorsFailed, "no detector output to verify");
    }
    Verification v{LabelVector(label_count), std::vector<double>(label_count, 0.0)};
    for (std::size_t j = 0; j < label_count; ++j) {
        const double p = learner.predict(gather_predictions(results, j));
        v.probabilities[j] = p;
        v.labels.set(j, p >= threshold);
    }
    return v;
}

void MetaCheckpoint::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "paravul-meta";
    j["version"] = 1;
    j["inputs"] = learner.inputs();
    j["hidden1"] = learner.hidden1();
    j["hidden2"] = learner.hidden2();
    j["threshold"] = threshold;
    j["parameters"] = learner.parameters();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

MetaCheckpoint MetaCheckpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open " + path.string());
    }
    try {
        const json j = json::parse(in);
        if (j.at("format") != "paravul-meta" || j.at("version") != 1) {
            throw Error(ErrorKind::ParseError, path.string() + ": not a meta-learner checkpoint");
        }
        MetaLearner m(j.at("inputs").get<std::size_t>(), j.at("hidden1").get<std::size_t>(),
                      j.at("hidden2").get<std::size_t>());
        m.set_parameters(j.at("parameters").get<std::vector<double>>());
        return {std::move(m), j.at("threshold").get<double>()};
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_meta_rows_csv(std::span<const MetaRow> rows, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    }
    const std::size_t psi = rows.empty() ? 0 : rows.front().predictions.size();
    for (std::size_t i = 0; i < psi; ++i) {
        out << "yhat" << i + 1 << ',';
    }
    out << "truth\n";
    out.precision(17);
    for (const auto& r : rows) {
        for (double p : r.predictions) {
            out << p << ',';
        }
        out << r.truth << '\n';
    }
}

}  // namespace paravul
