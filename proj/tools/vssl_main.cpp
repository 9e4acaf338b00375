#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vssl/config.hpp"
#include "vssl/data.hpp"
#include "vssl/eval.hpp"
#include "vssl/report.hpp"
#include "vssl/trainer.hpp"
#include "vssl/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDataError = 3;

void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw vssl::DataError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

struct EvalContext {
    vssl::TrainConfig cfg;
    std::vector<vssl::SyntheticVideo> corpus;
    vssl::EvalSplit split;
    vssl::EncoderPair pair;
};

EvalContext make_eval_context(const std::string& config_path, const std::string& checkpoint_path) {
    vssl::TrainConfig cfg = vssl::TrainConfig::from_file(config_path);
    auto corpus = vssl::generate_dataset(cfg.data_config());
    auto split = vssl::stratified_split(corpus, cfg.test_fraction, cfg.seed);
    auto pair = vssl::encoder_from_checkpoint(checkpoint_path, cfg);
    return {std::move(cfg), std::move(corpus), std::move(split), std::move(pair)};
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir,
                 const std::string& resume_path) {
    vssl::TrainConfig cfg = vssl::TrainConfig::from_file(config_path);
    if (resume_path.empty()) {
        vssl::Trainer trainer(cfg);
        const std::string final_ckpt = trainer.run(out_dir);
        std::cout << "final checkpoint: " << final_ckpt << "\n";
    } else {
        vssl::Trainer trainer = vssl::Trainer::from_checkpoint(resume_path, cfg);
        const std::string final_ckpt = trainer.run(out_dir);
        std::cout << "final checkpoint: " << final_ckpt << "\n";
    }
    return kExitOk;
}

int cmd_dump(const std::string& config_path, const std::string& out_dir) {
    const vssl::TrainConfig cfg = vssl::TrainConfig::from_file(config_path);
    const auto corpus = vssl::generate_dataset(cfg.data_config());
    vssl::save_corpus(out_dir, corpus, cfg.data_config());
    std::cout << "wrote " << corpus.size() << " videos to " << out_dir << "\n";
    return kExitOk;
}

int cmd_extract(const std::string& config_path, const std::string& checkpoint_path,
                const std::string& out_dir) {
    const EvalContext ctx = make_eval_context(config_path, checkpoint_path);
    const auto dcfg = ctx.cfg.data_config();
    const auto train =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.train_indices, "train", dcfg);
    const auto test =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.test_indices, "test", dcfg);
    fs::create_directories(out_dir);
    vssl::save_features(train, (fs::path(out_dir) / "features_train.bin").string());
    vssl::save_features(test, (fs::path(out_dir) / "features_test.bin").string());
    std::cout << "extracted " << train.rows() << " train and " << test.rows()
              << " test feature rows (dim " << train.dim << ")\n";
    return kExitOk;
}

int cmd_probe(const std::string& config_path, const std::string& checkpoint_path,
              const std::string& out_dir) {
    const EvalContext ctx = make_eval_context(config_path, checkpoint_path);
    const auto dcfg = ctx.cfg.data_config();
    const auto train =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.train_indices, "train", dcfg);
    const auto test =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.test_indices, "test", dcfg);
    const double top1 = vssl::linear_probe(train, test, ctx.cfg.probe_epochs, ctx.cfg.probe_lr);
    json j;
    j["top1"] = top1;
    j["train_rows"] = train.rows();
    j["test_rows"] = test.rows();
    write_json(fs::path(out_dir) / "probe.json", j);
    std::cout << "linear probe top-1: " << top1 << "\n";
    return kExitOk;
}

int cmd_retrieve(const std::string& config_path, const std::string& checkpoint_path,
                 const std::string& out_dir) {
    const EvalContext ctx = make_eval_context(config_path, checkpoint_path);
    const auto dcfg = ctx.cfg.data_config();
    const auto gallery =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.train_indices, "train", dcfg);
    const auto queries =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.test_indices, "test", dcfg);
    const auto result = vssl::recall_at_k(queries, gallery, ctx.cfg.retrieval_ks);
    json j;
    for (size_t i = 0; i < result.ks.size(); ++i)
        j["r_at_" + std::to_string(result.ks[i])] = result.recall[i];
    write_json(fs::path(out_dir) / "retrieval.json", j);
    for (size_t i = 0; i < result.ks.size(); ++i)
        std::cout << "R@" << result.ks[i] << ": " << result.recall[i] << "\n";
    return kExitOk;
}

int cmd_fewshot(const std::string& config_path, const std::string& checkpoint_path,
                const std::string& out_dir) {
    const EvalContext ctx = make_eval_context(config_path, checkpoint_path);
    const auto dcfg = ctx.cfg.data_config();
    const auto train =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.train_indices, "train", dcfg);
    const auto test =
        vssl::extract_features(ctx.pair, ctx.corpus, ctx.split.test_indices, "test", dcfg);
    json fractions = json::array();
    json top1s = json::array();
    for (const double f : ctx.cfg.fewshot_fractions) {
        const auto subset = vssl::few_shot_subset(train, f, ctx.cfg.seed);
        const double top1 = vssl::linear_probe(subset, test, ctx.cfg.probe_epochs, ctx.cfg.probe_lr);
        fractions.push_back(f);
        top1s.push_back(top1);
        std::cout << "fraction " << f << ": top-1 " << top1 << " (" << subset.rows()
                  << " train rows)\n";
    }
    json j;
    j["fractions"] = fractions;
    j["top1"] = top1s;
    write_json(fs::path(out_dir) / "fewshot.json", j);
    return kExitOk;
}

int cmd_nnquality(const std::string& config_path, const std::string& checkpoint_path,
                  const std::string& out_dir) {
    const EvalContext ctx = make_eval_context(config_path, checkpoint_path);
    const double frac = vssl::nn_quality(ctx.pair, ctx.corpus, ctx.cfg.data_config());
    json j;
    j["same_class_fraction"] = frac;
    write_json(fs::path(out_dir) / "nn_quality.json", j);
    std::cout << "top-5 same-class fraction: " << frac << "\n";
    return kExitOk;
}

int cmd_cooccur(const std::string& config_path, const std::string& out_dir, int classes_override,
                int64_t queue_override) {
    const vssl::TrainConfig cfg = vssl::TrainConfig::from_file(config_path);
    const int k = classes_override > 0 ? classes_override : cfg.n_classes;
    const int64_t q = queue_override >= 0 ? queue_override : cfg.queue_capacity;
    const double p = vssl::cooccurrence_probability(k, q);
    json j;
    j["classes"] = k;
    j["queue"] = q;
    j["probability"] = p;
    write_json(fs::path(out_dir) / "cooccurrence.json", j);
    std::cout << "P(same-class negative in queue) for K=" << k << ", Q=" << q << ": " << p << "\n";
    return kExitOk;
}

int cmd_report(const std::string& config_path, const std::string& out_dir,
               const std::string& metrics_path, const std::string& eval_dir) {
    const vssl::TrainConfig cfg = vssl::TrainConfig::from_file(config_path);
    vssl::ReportInputs inputs;
    inputs.metrics_csv_path = metrics_path;
    inputs.eval_dir = eval_dir;
    vssl::write_report(cfg, inputs, out_dir);
    std::cout << "wrote " << (fs::path(out_dir) / "report.json").string() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-supervised video representation pretraining and evaluation"};
    app.set_version_flag("--version", vssl::version_string());
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, resume_path, metrics_path, eval_dir;
    int classes_override = -1;
    int64_t queue_override = -1;

    auto* pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
    pretrain->add_option("--config", config_path, "config file")->required();
    pretrain->add_option("--out", out_dir, "output directory")->required();
    pretrain->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* dump = app.add_subcommand("dump", "write the synthetic corpus to disk");
    dump->add_option("--config", config_path, "config file")->required();
    dump->add_option("--out", out_dir, "output directory")->required();

    const auto add_eval_opts = [&](CLI::App* cmd, bool checkpoint_required) {
        cmd->add_option("--config", config_path, "config file")->required();
        auto* ck = cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file");
        if (checkpoint_required) ck->required();
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    auto* extract = app.add_subcommand("extract", "extract frozen backbone features");
    add_eval_opts(extract, true);
    auto* probe = app.add_subcommand("probe", "linear probe on frozen features");
    add_eval_opts(probe, true);
    auto* retrieve = app.add_subcommand("retrieve", "zero-shot retrieval recall at k");
    add_eval_opts(retrieve, true);
    auto* fewshot = app.add_subcommand("fewshot", "probe on stratified training subsets");
    add_eval_opts(fewshot, true);
    auto* nnquality = app.add_subcommand("nnquality", "top-5 same-class neighbor fraction");
    add_eval_opts(nnquality, true);

    auto* cooccur = app.add_subcommand("cooccur", "same-class co-occurrence probability");
    add_eval_opts(cooccur, false);
    cooccur->add_option("--classes", classes_override, "override class count");
    cooccur->add_option("--queue", queue_override, "override queue size");

    auto* report = app.add_subcommand("report", "aggregate metrics and eval outputs");
    add_eval_opts(report, false);
    report->add_option("--metrics", metrics_path, "metrics.csv from a pretraining run");
    report->add_option("--eval", eval_dir, "directory with eval json outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    try {
        if (pretrain->parsed()) return cmd_pretrain(config_path, out_dir, resume_path);
        if (dump->parsed()) return cmd_dump(config_path, out_dir);
        if (extract->parsed()) return cmd_extract(config_path, checkpoint_path, out_dir);
        if (probe->parsed()) return cmd_probe(config_path, checkpoint_path, out_dir);
        if (retrieve->parsed()) return cmd_retrieve(config_path, checkpoint_path, out_dir);
        if (fewshot->parsed()) return cmd_fewshot(config_path, checkpoint_path, out_dir);
        if (nnquality->parsed()) return cmd_nnquality(config_path, checkpoint_path, out_dir);
        if (cooccur->parsed()) return cmd_cooccur(config_path, out_dir, classes_override, queue_override);
        if (report->parsed()) return cmd_report(config_path, out_dir, metrics_path, eval_dir);
    } catch (const vssl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const vssl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
