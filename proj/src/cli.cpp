#include "ctrkit/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "ctrkit/config.hpp"
#include "ctrkit/errors.hpp"
#include "ctrkit/metrics.hpp"
#include "ctrkit/trainer.hpp"

namespace fs = std::filesystem;

namespace ctrkit {

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::map<std::string, std::string> overrides;  // flag values that win over the file
};

Config resolve_config(const CommonOpts& opts, bool require_file) {
    Config cfg;
    if (!opts.config_path.empty()) {
        cfg = Config::load(opts.config_path);
    } else if (require_file) {
        throw ConfigError("missing --config");
    }
    for (const auto& [k, v] : opts.overrides) cfg.set(k, v);
    return cfg;
}

std::string resolve_out_dir(const std::string& flag_value, const char* subcommand) {
    if (!flag_value.empty()) return flag_value;
    if (const char* root = std::getenv("CTRKIT_OUT_ROOT"))
        return std::string(root) + "/" + subcommand;
    throw ConfigError("missing --out (or set CTRKIT_OUT_ROOT)");
}

void write_manifest(const std::string& out_dir, const std::string& subcommand,
                    const Config& cfg, const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ofstream f(out_dir + "/manifest.txt");
    if (!f) throw DataError("cannot write manifest in " + out_dir);
    f << "subcommand=" << subcommand << "\n";
    for (const auto& [k, v] : extra) f << k << "=" << v << "\n";
    f << cfg.resolved_text();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << text;
}

struct EvalCell {
    double auc = 0.0;
    double logloss = 0.0;
};

EvalCell train_and_eval(TrainConfig tc, const Schema& schema,
                        const std::vector<Instance>& train_data,
                        const std::vector<Instance>& test_data) {
    TrainResult res = train(tc, schema, train_data);
    MetricsReport rep = evaluate_model(res.params, test_data, tc.batch_size);
    return {rep.auc, rep.logloss};
}

int cmd_gen_data(const CommonOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/true);
    std::string out = resolve_out_dir(opts.out_dir, "gen-data");
    fs::create_directories(out);
    SyntheticConfig sc = cfg.synthetic_config();
    SyntheticStats stats = synthesize_dataset(sc, out);
    write_manifest(out, "gen-data", cfg,
                   {{"artifact.train", out + "/train.tsv"},
                    {"artifact.test", out + "/test.tsv"},
                    {"artifact.sidecar", out + "/sidecar.tsv"},
                    {"artifact.schema", out + "/schema.txt"}});
    std::cout << "wrote " << out << "/train.tsv (positive rate " << stats.train_positive_rate
              << "), test.tsv (positive rate " << stats.test_positive_rate << ")\n";
    return 0;
}

struct TrainOpts : CommonOpts {
    std::string data_dir;
    std::string resume;
};

int cmd_train(const TrainOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/false);
    TrainConfig tc = cfg.train_config();
    std::string out = resolve_out_dir(opts.out_dir, "train");
    fs::create_directories(out);
    Schema schema = Schema::load(opts.data_dir + "/schema.txt", tc.d);
    std::vector<Instance> data = parse_dataset(opts.data_dir + "/train.tsv", schema);
    std::string ckpt = out + "/checkpoint.atck";
    TrainResult res = train(tc, schema, data, opts.resume.empty() ? nullptr : &opts.resume,
                            &ckpt);
    write_run_log(out + "/run_log.tsv", res.log);
    write_manifest(out, "train", cfg,
                   {{"data.train", opts.data_dir + "/train.tsv"},
                    {"data.schema", opts.data_dir + "/schema.txt"},
                    {"resume", opts.resume},
                    {"artifact.checkpoint", ckpt},
                    {"artifact.run_log", out + "/run_log.tsv"}});
    double final_loss = res.log.empty() ? 0.0 : res.log.back().l_total;
    std::cout << "trained " << res.log.size() << " steps, final total loss " << final_loss
              << ", checkpoint " << ckpt << "\n";
    return 0;
}

struct EvalOpts : CommonOpts {
    std::string checkpoint;
    std::string data_file;
    double calibrate = 1.0;
};

int cmd_eval(const EvalOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/false);
    std::string out = resolve_out_dir(opts.out_dir, "eval");
    fs::create_directories(out);
    Checkpoint ck = load_checkpoint(opts.checkpoint);
    std::vector<Instance> data = parse_dataset(opts.data_file, ck.params.schema);
    int batch_size = cfg.train_config().batch_size;
    MetricsReport rep = evaluate_model(ck.params, data, batch_size, opts.calibrate);
    std::string json = rep.to_json();
    write_text(out + "/report.json", json + "\n");
    write_manifest(out, "eval", cfg,
                   {{"checkpoint", opts.checkpoint},
                    {"data.eval", opts.data_file},
                    {"calibrate", std::to_string(opts.calibrate)},
                    {"artifact.report", out + "/report.json"}});
    std::cout << json << "\n";
    return 0;
}

struct AblateSamplingOpts : CommonOpts {
    std::string data_dir;
    std::string ratios = "0.1,0.3,0.5,1.0";
    std::string seeds = "1,2,3,4,5";
    std::string models = "base,uim,uim_nip";
};

TrainConfig cell_config(const TrainConfig& base, const std::string& model) {
    TrainConfig tc = base;
    if (model == "base") {
        tc.lambda_uim = 0.0;
        tc.lambda_nip = 0.0;
    } else if (model == "uim") {
        tc.lambda_nip = 0.0;
    } else if (model != "uim_nip") {
        throw ConfigError("unknown model '" + model + "' (expected base, uim, uim_nip)");
    }
    return tc;
}

int cmd_ablate_sampling(const AblateSamplingOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/false);
    TrainConfig base = cfg.train_config();
    std::string out = resolve_out_dir(opts.out_dir, "ablate-sampling");
    fs::create_directories(out);
    std::vector<double> ratios = parse_double_list(opts.ratios);
    std::vector<uint64_t> seeds = parse_u64_list(opts.seeds);
    std::vector<std::string> models;
    {
        std::istringstream is(opts.models);
        std::string tok;
        while (std::getline(is, tok, ',')) models.push_back(tok);
    }
    Schema schema = Schema::load(opts.data_dir + "/schema.txt", base.d);
    std::vector<Instance> train_data = parse_dataset(opts.data_dir + "/train.tsv", schema);
    std::vector<Instance> test_data = parse_dataset(opts.data_dir + "/test.tsv", schema);

    std::ostringstream rows, summary;
    rows.precision(17);
    summary.precision(17);
    rows << "ratio\tmodel\tseed\tauc\tlogloss\n";
    summary << "ratio\tmodel\tmean_auc\tmean_logloss\tn_seeds\n";
    for (double ratio : ratios) {
        for (const std::string& model : models) {
            double auc_sum = 0.0, ll_sum = 0.0;
            for (uint64_t seed : seeds) {
                TrainConfig tc = cell_config(base, model);
                tc.sampling_ratio = ratio;
                tc.seed = seed;
                EvalCell cell = train_and_eval(tc, schema, train_data, test_data);
                rows << ratio << "\t" << model << "\t" << seed << "\t" << cell.auc << "\t"
                     << cell.logloss << "\n";
                auc_sum += cell.auc;
                ll_sum += cell.logloss;
            }
            summary << ratio << "\t" << model << "\t" << auc_sum / seeds.size() << "\t"
                    << ll_sum / seeds.size() << "\t" << seeds.size() << "\n";
        }
    }
    write_text(out + "/results.tsv", rows.str());
    write_text(out + "/summary.tsv", summary.str());
    write_manifest(out, "ablate-sampling", cfg,
                   {{"data.dir", opts.data_dir},
                    {"ratios", opts.ratios},
                    {"seeds", opts.seeds},
                    {"models", opts.models},
                    {"artifact.results", out + "/results.tsv"},
                    {"artifact.summary", out + "/summary.tsv"}});
    std::cout << "wrote " << out << "/results.tsv and summary.tsv\n";
    return 0;
}

struct AblateWeightsOpts : CommonOpts {
    std::string data_dir;
    std::string uim_grid = "0,0.1,0.5,1,2";
    std::string nip_grid = "0,0.01,0.1,1,10";
    std::string seeds = "1,2,3,4,5";
};

int cmd_ablate_weights(const AblateWeightsOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/false);
    TrainConfig base = cfg.train_config();
    std::string out = resolve_out_dir(opts.out_dir, "ablate-weights");
    fs::create_directories(out);
    std::vector<uint64_t> seeds = parse_u64_list(opts.seeds);
    Schema schema = Schema::load(opts.data_dir + "/schema.txt", base.d);
    std::vector<Instance> train_data = parse_dataset(opts.data_dir + "/train.tsv", schema);
    std::vector<Instance> test_data = parse_dataset(opts.data_dir + "/test.tsv", schema);

    std::ostringstream rows, summary;
    rows.precision(17);
    summary.precision(17);
    rows << "task\tlambda\tseed\tauc\tlogloss\n";
    summary << "task\tlambda\tmean_auc\tmean_logloss\tn_seeds\n";
    auto sweep = [&](const char* task, const std::vector<double>& grid) {
        for (double lambda : grid) {
            double auc_sum = 0.0, ll_sum = 0.0;
            for (uint64_t seed : seeds) {
                // one-factor sweep from the base model
                TrainConfig tc = base;
                tc.lambda_uim = 0.0;
                tc.lambda_nip = 0.0;
                if (std::string(task) == "uim") tc.lambda_uim = lambda;
                else tc.lambda_nip = lambda;
                tc.seed = seed;
                EvalCell cell = train_and_eval(tc, schema, train_data, test_data);
                rows << task << "\t" << lambda << "\t" << seed << "\t" << cell.auc << "\t"
                     << cell.logloss << "\n";
                auc_sum += cell.auc;
                ll_sum += cell.logloss;
            }
            summary << task << "\t" << lambda << "\t" << auc_sum / seeds.size() << "\t"
                    << ll_sum / seeds.size() << "\t" << seeds.size() << "\n";
        }
    };
    sweep("uim", parse_double_list(opts.uim_grid));
    sweep("nip", parse_double_list(opts.nip_grid));
    write_text(out + "/results.tsv", rows.str());
    write_text(out + "/summary.tsv", summary.str());
    write_manifest(out, "ablate-weights", cfg,
                   {{"data.dir", opts.data_dir},
                    {"uim_grid", opts.uim_grid},
                    {"nip_grid", opts.nip_grid},
                    {"seeds", opts.seeds},
                    {"artifact.results", out + "/results.tsv"},
                    {"artifact.summary", out + "/summary.tsv"}});
    std::cout << "wrote " << out << "/results.tsv and summary.tsv\n";
    return 0;
}

struct CaseStudyOpts : CommonOpts {
    std::vector<std::string> checkpoints;
    std::string data_file;
    int k = 2000;
    uint64_t seed = 1;
};

int cmd_case_study(const CaseStudyOpts& opts) {
    Config cfg = resolve_config(opts, /*require_file=*/false);
    std::string out = resolve_out_dir(opts.out_dir, "case-study");
    fs::create_directories(out);
    std::vector<std::pair<std::string, std::string>> extra = {{"data.eval", opts.data_file},
                                                              {"k", std::to_string(opts.k)},
                                                              {"seed", std::to_string(opts.seed)}};
    for (size_t c = 0; c < opts.checkpoints.size(); ++c) {
        Checkpoint ck = load_checkpoint(opts.checkpoints[c]);
        std::vector<Instance> data = parse_dataset(opts.data_file, ck.params.schema);
        // same sample stream for every checkpoint so histograms are paired
        Rng rng = Rng::from(opts.seed, "case-study");
        RelevanceHistogram hist = relevance_case_study(ck.params, data, opts.k, rng);
        std::string path = out + "/histogram_" + std::to_string(c) + ".tsv";
        write_histogram_tsv(path, hist);
        std::cout << opts.checkpoints[c] << ": mean cosine " << hist.mean_cosine << " over "
                  << hist.total << " positives -> " << path << "\n";
        extra.emplace_back("checkpoint." + std::to_string(c), opts.checkpoints[c]);
        extra.emplace_back("artifact.histogram." + std::to_string(c), path);
    }
    write_manifest(out, "case-study", cfg, extra);
    return 0;
}

void add_override_flags(CLI::App* cmd, CommonOpts& opts) {
    static const std::vector<std::pair<std::string, std::string>> flags = {
        {"--seed", "seed"},
        {"--lambda-uim", "lambda_uim"},
        {"--lambda-nip", "lambda_nip"},
        {"--sampling-ratio", "sampling_ratio"},
        {"--epochs", "epochs"},
        {"--batch-size", "batch_size"},
        {"--lr", "lr"},
        {"--d", "d"},
        {"--m-max", "m_max"},
    };
    for (const auto& [flag, key] : flags) {
        std::string key_copy = key;
        cmd->add_option_function<std::string>(
            flag, [&opts, key_copy](const std::string& v) { opts.overrides[key_copy] = v; },
            "overrides config key " + key);
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"multi-task CTR training engine with auxiliary match tasks"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "OpenMP thread count (0 = library default)");

    CommonOpts gen_opts;
    auto* gen = app.add_subcommand("gen-data", "synthesize a planted-affinity dataset");
    gen->add_option("--config", gen_opts.config_path, "key=value config file")->required();
    gen->add_option("--out", gen_opts.out_dir, "output directory");
    add_override_flags(gen, gen_opts);

    TrainOpts train_opts;
    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", train_opts.config_path, "key=value config file");
    tr->add_option("--data", train_opts.data_dir, "dataset directory (train.tsv, schema.txt)")
        ->required();
    tr->add_option("--out", train_opts.out_dir, "output directory");
    tr->add_option("--resume", train_opts.resume, "checkpoint to resume from");
    add_override_flags(tr, train_opts);

    EvalOpts eval_opts;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file")->required();
    ev->add_option("--data", eval_opts.data_file, "evaluation TSV file")->required();
    ev->add_option("--calibrate", eval_opts.calibrate,
                   "apply down-sampling re-calibration with this ratio");
    ev->add_option("--config", eval_opts.config_path, "key=value config file");
    ev->add_option("--out", eval_opts.out_dir, "output directory");
    add_override_flags(ev, eval_opts);

    AblateSamplingOpts abs_opts;
    auto* abs = app.add_subcommand("ablate-sampling",
                                   "sweep down-sampling ratios across model variants");
    abs->add_option("--config", abs_opts.config_path, "key=value config file");
    abs->add_option("--data", abs_opts.data_dir, "dataset directory")->required();
    abs->add_option("--ratios", abs_opts.ratios, "comma list of sampling ratios");
    abs->add_option("--seeds", abs_opts.seeds, "comma list of seeds");
    abs->add_option("--models", abs_opts.models, "comma list from {base, uim, uim_nip}");
    abs->add_option("--out", abs_opts.out_dir, "output directory");
    add_override_flags(abs, abs_opts);

    AblateWeightsOpts abw_opts;
    auto* abw = app.add_subcommand("ablate-weights", "sweep auxiliary loss weights");
    abw->add_option("--config", abw_opts.config_path, "key=value config file");
    abw->add_option("--data", abw_opts.data_dir, "dataset directory")->required();
    abw->add_option("--lambda-uim-grid", abw_opts.uim_grid, "comma list of UIM weights");
    abw->add_option("--lambda-nip-grid", abw_opts.nip_grid, "comma list of NIP weights");
    abw->add_option("--seeds", abw_opts.seeds, "comma list of seeds");
    abw->add_option("--out", abw_opts.out_dir, "output directory");
    add_override_flags(abw, abw_opts);

    CaseStudyOpts cs_opts;
    auto* cs = app.add_subcommand("case-study", "positive-pair cosine relevance histograms");
    cs->add_option("--checkpoint", cs_opts.checkpoints, "checkpoint file (repeatable)")
        ->required();
    cs->add_option("--data", cs_opts.data_file, "evaluation TSV file")->required();
    cs->add_option("-k,--sample-size", cs_opts.k, "number of positives to sample");
    cs->add_option("--seed", cs_opts.seed, "sampling seed");
    cs->add_option("--config", cs_opts.config_path, "key=value config file");
    cs->add_option("--out", cs_opts.out_dir, "output directory");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 1;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (gen->parsed()) return cmd_gen_data(gen_opts);
        if (tr->parsed()) return cmd_train(train_opts);
        if (ev->parsed()) return cmd_eval(eval_opts);
        if (abs->parsed()) return cmd_ablate_sampling(abs_opts);
        if (abw->parsed()) return cmd_ablate_weights(abw_opts);
        if (cs->parsed()) return cmd_case_study(cs_opts);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}

}  // namespace ctrkit
