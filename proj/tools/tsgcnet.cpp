// tsgcnet: synthetic data, training, evaluation, prediction, ablation and
// self-verification for the two-stream graph segmentation network.
//
// Exit codes: 0 success, 1 failed check or invalid data/input file, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tsgc/checkpoint.hpp"
#include "tsgc/config_io.hpp"
#include "tsgc/errors.hpp"
#include "tsgc/experiment.hpp"
#include "tsgc/metrics.hpp"
#include "tsgc/synth.hpp"
#include "tsgc/training.hpp"
#include "tsgc/verify.hpp"

#ifndef TSGC_DEFAULT_SPLIT_SEEDS
#define TSGC_DEFAULT_SPLIT_SEEDS "configs/synthetic_split.tsv"
#endif

namespace fs = std::filesystem;
using namespace tsgc;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

fs::path default_out_dir(const std::string& leaf) {
  const char* env = std::getenv("TSGCNET_OUT_DIR");
  return fs::path(env && *env ? env : "tsgcnet-out") / leaf;
}

struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "override one config key, as key=value (repeatable)");
}

/// Desk defaults, then the config file, then --set overrides.
void resolve_config(const ConfigArgs& args, ModelConfig& model, TrainConfig& train) {
  if (!args.config_path.empty()) apply_key_values(read_key_values(args.config_path), model, train);
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    apply_key_value(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), model, train);
  }
  model.validate();
  train.validate();
}

std::vector<TriangleMesh> load_manifest_split(const fs::path& manifest, const std::string& split) {
  if (!fs::exists(manifest)) throw IoError("manifest " + manifest.string() + " does not exist");
  std::vector<TriangleMesh> meshes = load_split(read_manifest(manifest), split);
  if (meshes.empty()) throw DataError("manifest " + manifest.string() + " lists no '" + split + "' meshes");
  return meshes;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int cmd_synth(const fs::path& out, int n_train, int n_test, std::uint64_t seed, const std::string& seeds_file,
              ArchSpec spec) {
  const SplitSeeds seeds = seeds_file.empty() ? derive_split_seeds(n_train, n_test, seed) : read_split_seeds(seeds_file);
  const auto entries = make_dataset(spec, seeds, out);
  std::cout << "wrote " << entries.size() << " meshes (" << seeds.train.size() << " train, " << seeds.test.size()
            << " test, " << spec.num_classes() << " classes) and " << (out / "manifest.tsv").string() << "\n";
  return 0;
}

int cmd_train(const ConfigArgs& args, const fs::path& manifest, const fs::path& out, const std::string& variant,
              const std::string& resume_path) {
  ModelConfig model_config = desk_model_config();
  TrainConfig train_config = desk_train_config();
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    if (!resume->training) throw UsageError(resume_path + " holds no training state");
    model_config = resume->config;
    train_config = resume->training->config;
  }
  if (!variant.empty()) model_config = variant_config(variant, model_config);
  resolve_config(args, model_config, train_config);
  std::vector<TriangleMesh> meshes = load_manifest_split(manifest, "train");

  TSGCNet<float> model = build_variant(model_config);
  Trainer trainer(model, std::move(meshes), train_config);
  if (resume) trainer.resume(*resume);

  fs::create_directories(out);
  write_text(out / "config.txt", "# model\n" + to_text(model_config) + "# training\n" + to_text(train_config));
  std::ofstream log(out / "train_log.tsv", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / "train_log.tsv").string());
  if (!resume) write_log_header(log);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    write_log_line(log, r);
    log.flush();
    write_log_line(std::cout, r);
  };
  trainer.run(out, hooks);
  std::cout << "checkpoint " << (out / "final.tsgc").string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& manifest, const std::string& split,
             const std::string& report_path) {
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const std::vector<TriangleMesh> meshes = load_manifest_split(manifest, split);
  TSGCNet<float> model = model_from_checkpoint(checkpoint);
  const bool center = checkpoint.training ? checkpoint.training->config.center : true;
  const SegmentationMetrics metrics = compute_metrics(evaluate(model, meshes, center));
  const auto names = default_class_names(checkpoint.config.num_classes);
  if (report_path.empty()) {
    write_report(std::cout, metrics, names);
  } else {
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write " + report_path);
    write_report(out, metrics, names);
    std::cout << "OA " << metrics.overall_accuracy << "  mIoU " << metrics.mean_iou << "\n";
  }
  return 0;
}

int cmd_predict(const fs::path& checkpoint_path, const fs::path& mesh_path, fs::path out_ply, fs::path classes_path) {
  const Checkpoint checkpoint = load_checkpoint(checkpoint_path);
  const TriangleMesh mesh = load_mesh(mesh_path);
  TSGCNet<float> model = model_from_checkpoint(checkpoint);
  const bool center = checkpoint.training ? checkpoint.training->config.center : true;
  const std::vector<int> classes = predict(model, mesh, center);
  if (classes_path.empty()) classes_path = fs::path(out_ply).replace_extension(".labels");
  if (out_ply.has_parent_path()) fs::create_directories(out_ply.parent_path());
  export_colored_mesh(mesh, classes, default_palette(checkpoint.config.num_classes), out_ply);
  save_labels(classes, classes_path);
  std::cout << "wrote " << out_ply.string() << " and " << classes_path.string() << "\n";
  return 0;
}

int cmd_ablate(const ConfigArgs& args, const fs::path& manifest, const fs::path& out,
               const std::vector<std::string>& variants) {
  ModelConfig base = desk_model_config();
  TrainConfig train_config = desk_train_config();
  resolve_config(args, base, train_config);
  for (const auto& v : variants) variant_config(v, base).validate();
  const std::vector<TriangleMesh> train_set = load_manifest_split(manifest, "train");
  const std::vector<TriangleMesh> test_set = load_manifest_split(manifest, "test");

  fs::create_directories(out);
  std::vector<ExperimentResult> rows;
  for (const auto& v : variants) {
    std::cerr << "training " << v << " ..." << std::endl;
    rows.push_back(run_experiment(v, base, train_config, train_set, test_set));
  }
  const auto names = default_class_names(base.num_classes);
  write_ablation_table(std::cout, rows, names);
  std::ofstream txt(out / "ablation.txt"), tsv(out / "ablation.tsv");
  if (!txt || !tsv) throw IoError("cannot write ablation tables in " + out.string());
  write_ablation_table(txt, rows, names);
  write_ablation_tsv(tsv, rows, names);
  std::cout << "tables: " << (out / "ablation.txt").string() << ", " << (out / "ablation.tsv").string() << "\n";
  return 0;
}

int cmd_verify(bool quick, const std::string& mutate, const std::string& seeds) {
  if (mutate == "softmax") debug::set_softmax_fault(true);
  VerifyOptions options;
  options.quick = quick;
  options.split_seeds = seeds;
  options.on_result = [](const CheckResult& r) { print_result(std::cout, r); };
  const std::vector<CheckResult> results = run_acceptance(options);
  int failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << (failed ? "FAILED: " + std::to_string(failed) + " of " : "all ") << results.size() << " checks"
            << (failed ? "" : " passed") << "\n";
  return failed ? kExitFailure : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stream graph network for triangle-mesh cell segmentation"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic arch dataset");
  fs::path synth_out;
  int n_train = 20, n_test = 5;
  std::uint64_t synth_seed = 1;
  std::string seeds_file;
  ArchSpec spec;
  synth->add_option("-o,--out", synth_out, "output directory (default $TSGCNET_OUT_DIR/data)");
  synth->add_option("--train", n_train, "training meshes")->check(CLI::PositiveNumber);
  synth->add_option("--test", n_test, "test meshes")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "dataset seed");
  synth->add_option("--seeds", seeds_file, "explicit `split seed` list (overrides --train/--test/--seed)")
      ->check(CLI::ExistingFile);
  synth->add_option("--teeth", spec.num_teeth, "teeth per half arch (classes = teeth + 1)");
  synth->add_option("--cells", spec.cells_target, "target cells per mesh");
  synth->add_option("--crowding", spec.crowding, "gap reduction in [0, 1]");

  ConfigArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model on the train split of a manifest");
  fs::path train_manifest, train_out;
  std::string variant, resume;
  add_config_flags(train_cmd, train_args);
  train_cmd->add_option("-m,--manifest", train_manifest, "dataset manifest")->required();
  train_cmd->add_option("-o,--out", train_out, "output directory (default $TSGCNET_OUT_DIR/train)");
  train_cmd->add_option("--variant", variant, "ablation variant applied before the config");
  train_cmd->add_option("--resume", resume, "continue from a checkpoint with training state");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest split");
  fs::path eval_ckpt, eval_manifest;
  std::string eval_split = "test", report;
  eval_cmd->add_option("-k,--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("-m,--manifest", eval_manifest, "dataset manifest")->required();
  eval_cmd->add_option("--split", eval_split, "split to evaluate");
  eval_cmd->add_option("-r,--report", report, "write the report here instead of stdout");

  auto* predict_cmd = app.add_subcommand("predict", "segment one mesh and export a colored ply");
  fs::path pred_ckpt, pred_mesh, pred_out, pred_classes;
  predict_cmd->add_option("-k,--checkpoint", pred_ckpt, "checkpoint file")->required();
  predict_cmd->add_option("mesh", pred_mesh, "input obj or ply")->required();
  predict_cmd->add_option("-o,--out", pred_out, "colored ply output")->required();
  predict_cmd->add_option("--classes", pred_classes, "per-cell class file (default: the output path with a .labels extension)");

  ConfigArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare variants with matched seeds and data");
  fs::path ablate_manifest, ablate_out;
  std::vector<std::string> variants{"TSGCNet", "TSGCNet-C", "TSGCNet-N", "TSGCNet-S",
                                    "M+M",     "A+A",       "M+A",       "L-fusion"};
  add_config_flags(ablate_cmd, ablate_args);
  ablate_cmd->add_option("-m,--manifest", ablate_manifest, "dataset manifest")->required();
  ablate_cmd->add_option("-o,--out", ablate_out, "output directory (default $TSGCNET_OUT_DIR/ablate)");
  ablate_cmd->add_option("--variants", variants, "variant names")->delimiter(',');

  auto* verify_cmd = app.add_subcommand("verify", "run the acceptance checks");
  bool quick = false;
  std::string mutate, verify_seeds = TSGC_DEFAULT_SPLIT_SEEDS;
  verify_cmd->add_flag("--quick", quick, "skip the two long training checks");
  verify_cmd->add_option("--mutate", mutate, "inject a known fault")->check(CLI::IsMember({"softmax"}));
  verify_cmd->add_option("--seeds", verify_seeds, "split seed list for the training checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_out.empty() ? default_out_dir("data") : synth_out, n_train, n_test, synth_seed,
                                 seeds_file, spec);
    if (*train_cmd) {
      return cmd_train(train_args, train_manifest, train_out.empty() ? default_out_dir("train") : train_out, variant,
                       resume);
    }
    if (*eval_cmd) return cmd_eval(eval_ckpt, eval_manifest, eval_split, report);
    if (*predict_cmd) return cmd_predict(pred_ckpt, pred_mesh, pred_out, pred_classes);
    if (*ablate_cmd) {
      return cmd_ablate(ablate_args, ablate_manifest, ablate_out.empty() ? default_out_dir("ablate") : ablate_out,
                        variants);
    }
    if (*verify_cmd) return cmd_verify(quick, mutate, verify_seeds);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
