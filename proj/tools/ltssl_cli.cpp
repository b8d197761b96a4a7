// Command-line front end: data generation, training, evaluation, audits and sweeps.

#include "ltssl/checkpoint.hpp"
#include "ltssl/config.hpp"
#include "ltssl/dataset.hpp"
#include "ltssl/energy.hpp"
#include "ltssl/errors.hpp"
#include "ltssl/format.hpp"
#include "ltssl/report.hpp"
#include "ltssl/sweep.hpp"
#include "ltssl/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace ltssl;

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.path, "Flat JSON config file");
  cmd->add_option("--set", args.overrides, "Override a config key (key=value), repeatable");
}

TrainConfig load_config(const ConfigArgs& args, int num_classes) {
  TrainConfig cfg = args.path.empty() ? default_config(num_classes) : TrainConfig::load(args.path);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

DatasetSplit load_split(const TrainConfig& cfg, const std::string& train_path,
                        const std::string& test_path) {
  DatasetFile train = read_dataset(train_path);
  DatasetFile test = test_path.empty() ? DatasetFile{} : read_dataset(test_path);
  if (!test_path.empty() && (test.num_classes != train.num_classes || test.height != train.height ||
                             test.width != train.width))
    throw DataError("train and test files disagree on K or image size");
  if (train.num_classes != cfg.num_classes)
    throw ConfigError("num_classes " + std::to_string(cfg.num_classes) + " does not match the " +
                      std::to_string(train.num_classes) + " classes of " + train_path);
  return make_splits(train.samples, std::move(test.samples), train.num_classes, cfg.label_fraction,
                     cfg.seed);
}

int peek_classes(const std::string& path) { return read_dataset(path).num_classes; }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << text;
}

Checkpoint load_checked(const std::string& path, const TrainConfig& cfg) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.fingerprint != cfg.fingerprint())
    throw ConfigError("checkpoint fingerprint " + ck.fingerprint + " does not match config " +
                      cfg.fingerprint());
  return ck;
}

int run(int argc, char** argv) {
  CLI::App app{"Semi-supervised long-tailed image classification"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a balanced synthetic SAR-like pool");
  std::string gen_out;
  int gen_classes = 5, gen_per_class = 100, gen_size = 32;
  double gen_looks = 4.0;
  double gen_jitter = 1.0;
  std::uint64_t gen_seed = 0;
  std::uint32_t gen_first_id = 0;
  bool gen_test = false;
  gen->add_option("--out", gen_out, "Output dataset file")->required();
  gen->add_option("--classes", gen_classes, "Number of classes")->capture_default_str();
  gen->add_option("--per-class", gen_per_class, "Samples per class")->capture_default_str();
  gen->add_option("--size", gen_size, "Image side length")->capture_default_str();
  gen->add_option("--looks", gen_looks, "Speckle looks")->capture_default_str();
  gen->add_option("--jitter", gen_jitter, "Per-sample variation scale")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Seed")->capture_default_str();
  gen->add_option("--first-id", gen_first_id, "First sample id")->capture_default_str();
  gen->add_flag("--test", gen_test, "Draw from the test-pool stream");

  // build-longtail
  auto* lt = app.add_subcommand("build-longtail", "Subsample a pool to an exponential long tail");
  std::string lt_in, lt_out;
  int lt_head = 100;
  double lt_ratio = 10.0;
  std::uint64_t lt_seed = 0;
  lt->add_option("--in", lt_in, "Input dataset file")->required();
  lt->add_option("--out", lt_out, "Output dataset file")->required();
  lt->add_option("--head", lt_head, "Samples in the largest class")->capture_default_str();
  lt->add_option("--ratio", lt_ratio, "Imbalance ratio")->capture_default_str();
  lt->add_option("--seed", lt_seed, "Seed")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train and write checkpoints and metrics");
  ConfigArgs train_cfg;
  std::string train_data, test_data, train_out;
  bool resume = false, quiet = false;
  add_config_options(train, train_cfg);
  train->add_option("--train", train_data, "Training dataset file")->required();
  train->add_option("--test", test_data, "Test dataset file")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_flag("--resume", resume, "Resume from <out>/last.ckpt");
  train->add_flag("--quiet", quiet, "No progress lines");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a test file");
  ConfigArgs eval_cfg;
  std::string eval_ckpt, eval_train, eval_test, eval_json, eval_weights = "ema";
  add_config_options(eval, eval_cfg);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--train", eval_train, "Training dataset (defines tail classes)")->required();
  eval->add_option("--test", eval_test, "Test dataset file")->required();
  eval->add_option("--json", eval_json, "Write the JSON report here");
  eval->add_option("--weights", eval_weights, "ema or params")
      ->check(CLI::IsMember({"ema", "params"}))
      ->capture_default_str();

  // audit-pseudo
  auto* aud = app.add_subcommand("audit-pseudo", "Audit pseudo-labels against hidden labels");
  ConfigArgs aud_cfg;
  std::string aud_ckpt, aud_train, aud_out;
  add_config_options(aud, aud_cfg);
  aud->add_option("--checkpoint", aud_ckpt, "Checkpoint file")->required();
  aud->add_option("--train", aud_train, "Training dataset file")->required();
  aud->add_option("--out", aud_out, "Write JSON lines here instead of stdout");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Grid sweep over config keys");
  ConfigArgs sw_cfg;
  std::string sw_train, sw_test, sw_out;
  std::vector<std::string> sw_grids, sw_axes;
  add_config_options(sw, sw_cfg);
  sw->add_option("--train", sw_train, "Training dataset file")->required();
  sw->add_option("--test", sw_test, "Test dataset file")->required();
  sw->add_option("--out", sw_out, "Output CSV")->required();
  sw->add_option("--grid", sw_grids,
                 "Default grid to include: tau_e, temperature, triplet_margin, lambda_u, lambda_ahtl");
  sw->add_option("--axis", sw_axes, "Custom axis key=v1,v2,...");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
  }

  if (*gen) {
    SynthConfig sc;
    sc.num_classes = gen_classes;
    sc.height = sc.width = gen_size;
    sc.speckle_looks = gen_looks;
    sc.jitter = gen_jitter;
    if (gen_classes < 2 || gen_per_class < 1 || gen_size < 4 || gen_looks <= 0.0)
      throw ConfigError("gen-data needs classes >= 2, per-class >= 1, size >= 4, looks > 0");
    const std::vector<int> counts(static_cast<std::size_t>(gen_classes), gen_per_class);
    DatasetFile f{gen_classes, gen_size, gen_size,
                  synth_generate(sc, counts, gen_seed, gen_first_id,
                                 gen_test ? StreamTag::kTestPool : StreamTag::kGenerate)};
    write_dataset(gen_out, f);
    std::cout << "wrote " << f.samples.size() << " samples to " << gen_out << "\n";
  } else if (*lt) {
    DatasetFile f = read_dataset(lt_in);
    const auto counts = longtail_counts({lt_head, lt_ratio, f.num_classes});
    f.samples = subsample_per_class(f.samples, counts, lt_seed);
    write_dataset(lt_out, f);
    std::cout << "class counts:";
    for (int c : counts) std::cout << ' ' << c;
    std::cout << "\nwrote " << f.samples.size() << " samples to " << lt_out << "\n";
  } else if (*train) {
    const TrainConfig cfg = load_config(train_cfg, peek_classes(train_data));
    const DatasetSplit split = load_split(cfg, train_data, test_data);
    FitOptions opts;
    opts.out_dir = train_out;
    opts.resume = resume;
    opts.progress = quiet ? nullptr : &std::cout;
    const FitResult r = fit(cfg, split, opts);
    std::cout << r.report.to_text();
  } else if (*eval) {
    const TrainConfig cfg = load_config(eval_cfg, peek_classes(eval_train));
    const DatasetSplit split = load_split(cfg, eval_train, eval_test);
    const Checkpoint ck = load_checked(eval_ckpt, cfg);
    const SmallConvNet net(cfg.arch());
    ModelParams params = net.zero_params();
    ck.get(eval_weights == "ema" ? "ema" : "params", params);
    const MetricsReport r = summarize(evaluate(net, params, split.test),
                                      split.labeled_class_counts(), {}, cfg.fingerprint());
    if (!eval_json.empty()) write_file(eval_json, dump_json(r.to_json()) + "\n");
    std::cout << r.to_text();
  } else if (*aud) {
    const TrainConfig cfg = load_config(aud_cfg, peek_classes(aud_train));
    const DatasetSplit split = load_split(cfg, aud_train, "");
    const Checkpoint ck = load_checked(aud_ckpt, cfg);
    const SmallConvNet net(cfg.arch());
    ModelParams params = net.zero_params();
    ck.get("params", params);
    const Selection sel = select_unlabeled(net, params, split, cfg.selection, ck.iteration);
    const AuditTable table = audit(sel.records, split.hidden, cfg.num_classes);
    std::ostringstream os;
    write_audit_jsonl(os, 0, table);
    if (aud_out.empty()) std::cout << os.str();
    else write_file(aud_out, os.str());
    std::cerr << "selected " << table.selected << " of " << split.unlabeled.size()
              << ", precision " << json_number(table.precision) << ", recall "
              << json_number(table.recall) << "\n";
  } else if (*sw) {
    const TrainConfig cfg = load_config(sw_cfg, peek_classes(sw_train));
    const DatasetSplit split = load_split(cfg, sw_train, sw_test);
    SweepGrid grid;
    for (const auto& g : sw_grids) grid.axes.push_back(default_axis(g));
    for (const auto& a : sw_axes) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw ConfigError("--axis expects key=v1,v2,..., got '" + a + "'");
      GridAxis axis{a.substr(0, eq), {}};
      std::istringstream vs(a.substr(eq + 1));
      std::string v;
      while (std::getline(vs, v, ',')) {
        nlohmann::json parsed = nlohmann::json::parse(v, nullptr, false);
        axis.values.push_back(parsed.is_discarded() ? nlohmann::json(v) : parsed);
      }
      grid.axes.push_back(std::move(axis));
    }
    const auto rows = sweep(cfg, grid, split, {}, &std::cout);
    std::ofstream os(sw_out, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write '" + sw_out + "'");
    write_sweep_csv(os, grid, rows);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ltssl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ltssl::ExitCode::kDataError);
  }
}
