// paravul: command-line driver for the detection pipeline.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "paravul/error.hpp"
#include "paravul/pipeline.hpp"
#include "paravul/synth.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<int> k;
    std::optional<double> alpha;
    std::optional<std::size_t> rank;
    std::optional<std::size_t> epochs;
    std::optional<double> threshold;
    std::optional<std::string> endpoint;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

enum class Command { Ingest, BuildIndex, TrainSlora, TrainMeta, Detect, Evaluate, Report };

paravul::PipelineConfig load_config(const Overrides& o, Command cmd) {
    auto c = paravul::PipelineConfig::load(o.config);
    if (o.seed) {
        c.seed = *o.seed;
        c.meta.train.seed = *o.seed;
        c.slora.train.seed = *o.seed;
    }
    if (o.out) {
        c.work_dir = *o.out;
    }
    if (o.k) {
        if (*o.k <= 0) {
            throw paravul::Error(paravul::ErrorKind::ConfigError, "--k must be positive");
        }
        c.bm25.top_k = *o.k;
    }
    if (o.alpha) {
        c.slora.alpha = *o.alpha;
    }
    if (o.rank) {
        c.slora.rank = *o.rank;
    }
    if (o.epochs) {
        if (cmd == Command::TrainMeta) {
            c.meta.train.epochs = *o.epochs;
        } else {
            c.slora.train.epochs = *o.epochs;
        }
    }
    if (o.threshold) {
        c.meta.train.threshold = *o.threshold;
    }
    if (o.endpoint) {
        c.report.endpoint = *o.endpoint;
    }
    return c;
}

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config, "pipeline configuration (JSON)")->required();
    sub->add_option("--k", o.k, "BM25 top-K");
    sub->add_option("--alpha", o.alpha, "SLoRA sparsity level");
    sub->add_option("--rank", o.rank, "SLoRA rank");
    sub->add_option("--epochs", o.epochs, "training epochs for this stage");
    sub->add_option("--threshold", o.threshold, "verification decision threshold");
    sub->add_option("--endpoint", o.endpoint, "report LLM endpoint");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--out", o.out, "work directory");
}

int run(Command cmd, const Overrides& o) {
    const paravul::Pipeline pipeline(load_config(o, cmd));
    switch (cmd) {
        case Command::Ingest: {
            const auto [train, test] = pipeline.ingest();
            std::cout << "ingested " << train << " train and " << test << " test contracts into "
                      << pipeline.paths().root.string() << "\n";
            break;
        }
        case Command::BuildIndex:
            pipeline.build_index();
            std::cout << "wrote " << pipeline.paths().bm25_index().string() << " and "
                      << pipeline.paths().vector_store().string() << "\n";
            break;
        case Command::TrainSlora: {
            const auto r = pipeline.train_slora();
            std::cout << "trained " << r.loss_trace.size() << " epochs, final loss "
                      << (r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << "\n";
            break;
        }
        case Command::TrainMeta: {
            const auto r = pipeline.train_meta();
            std::cout << "trained meta-learner, final loss " << (r.loss_trace.empty() ? 0.0 : r.loss_trace.back())
                      << "\n";
            break;
        }
        case Command::Detect: {
            const auto records = pipeline.detect();
            std::size_t unverified = 0;
            for (const auto& r : records) {
                unverified += r.verified ? 0 : 1;
            }
            std::cout << "detected " << records.size() << " contracts";
            if (unverified) {
                std::cout << " (" << unverified << " with every detector failed)";
            }
            std::cout << "\n";
            break;
        }
        case Command::Evaluate:
            std::cout << pipeline.evaluate().table();
            break;
        case Command::Report: {
            const auto files = pipeline.report();
            std::cout << "wrote " << files.size() << " reports to " << pipeline.paths().reports().string() << "\n";
            break;
        }
    }
    return 0;
}

int run_synth(const std::string& config, std::size_t n, std::uint64_t seed, const std::string& out) {
    paravul::Taxonomy taxonomy = paravul::Taxonomy::synthetic_default();
    if (!config.empty()) {
        taxonomy = paravul::Pipeline(paravul::PipelineConfig::load(config)).taxonomy();
    }
    paravul::SynthOptions options;
    options.count = n;
    options.seed = seed;
    const auto dataset = paravul::synthesize(options, taxonomy);
    const std::filesystem::path dir(out);
    std::filesystem::create_directories(dir);
    paravul::export_dataset(dataset, dir / "corpus.jsonl");
    taxonomy.save(dir / "taxonomy.json");
    std::cout << "wrote " << dataset.size() << " contracts to " << (dir / "corpus.jsonl").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"paravul: hybrid smart-contract vulnerability detection"};
    app.require_subcommand(1);

    Overrides o;
    struct Stage {
        const char* name;
        const char* help;
        Command cmd;
    };
    const Stage stages[] = {
        {"ingest", "validate the dataset and write train/test splits", Command::Ingest},
        {"build-index", "build the BM25 index and the dense vector store", Command::BuildIndex},
        {"train-slora", "train the SLoRA detector", Command::TrainSlora},
        {"train-meta", "train the verification meta-learner", Command::TrainMeta},
        {"detect", "run every detector on the test split and verify", Command::Detect},
        {"evaluate", "score detections against the test labels", Command::Evaluate},
        {"report", "write Markdown reports for verified detections", Command::Report},
    };
    std::optional<Command> chosen;
    for (const auto& [name, help, cmd] : stages) {
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, o);
        sub->callback([&chosen, cmd = cmd] { chosen = cmd; });
    }

    std::string synth_config;
    std::size_t synth_n = 200;
    std::uint64_t synth_seed = 7;
    std::string synth_out = "data/synth";
    bool synth = false;
    auto* sub = app.add_subcommand("synth", "generate a labelled synthetic corpus");
    sub->add_option("--config", synth_config, "configuration supplying the taxonomy");
    sub->add_option("--n", synth_n, "number of contracts");
    sub->add_option("--seed", synth_seed, "generator seed");
    sub->add_option("--out", synth_out, "output directory");
    sub->callback([&synth] { synth = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth) {
            return run_synth(synth_config, synth_n, synth_seed, synth_out);
        }
        return run(*chosen, o);
    } catch (const paravul::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case paravul::ErrorKind::ConfigError:
            case paravul::ErrorKind::InvalidParameter:
                return 2;
            case paravul::ErrorKind::AllDetectorsFailed:
                return 4;
            default:
                return 3;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
