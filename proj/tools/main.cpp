#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddpolab/checkpoint.hpp"
#include "ddpolab/config.hpp"
#include "ddpolab/dataset.hpp"
#include "ddpolab/ddpo.hpp"
#include "ddpolab/diffusion.hpp"
#include "ddpolab/emit.hpp"
#include "ddpolab/metrics.hpp"
#include "ddpolab/reward.hpp"
#include "ddpolab/rng.hpp"
#include "ddpolab/schedule.hpp"

namespace fs = std::filesystem;
using namespace ddpolab;

namespace {

// Flag overrides layered on top of --config; only explicitly passed flags
// replace config values.
struct CommonArgs {
  std::string config_path;
  std::string out;
  std::string data;
  std::uint64_t seed = 0;
  int threads = 0;
  int samples = 0;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* data_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* samples_opt = nullptr;  // only on subcommands that sample
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (key=value lines)");
  args.seed_opt = cmd->add_option("--seed", args.seed, "override the global seed");
  args.out_opt = cmd->add_option("--out", args.out, "override the output directory");
  args.data_opt = cmd->add_option("--data", args.data, "override the dataset directory");
  args.threads_opt = cmd->add_option("--threads", args.threads, "worker threads (default 1)");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
  if (args.seed_opt->count()) cfg.seed = args.seed;
  if (args.out_opt->count()) cfg.out_dir = args.out;
  if (args.data_opt->count()) cfg.data_dir = args.data;
  if (args.threads_opt->count()) cfg.threads = args.threads;
  if (args.samples_opt && args.samples_opt->count()) cfg.samples = args.samples;
  if (cfg.threads < 1) throw std::runtime_error("threads must be >= 1");
  return cfg;
}

// Every run leaves a reproducible record of its effective configuration.
void echo_config(const RunConfig& cfg, const std::string& dir, const std::string& command) {
  fs::create_directories(dir);
  save_config_file(cfg, dir + "/" + command + ".config.txt");
}

VarianceSchedule schedule_of(const RunConfig& cfg) {
  return make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
}

std::vector<AttributeVector> prompts_of(const RunConfig& cfg, const std::string& prompt_flag) {
  if (!prompt_flag.empty()) return {parse_prompt(prompt_flag)};
  if (!cfg.prompts.empty()) return cfg.prompts;
  return default_ddpo_prompts();
}

nn::ModelParams load_params(const std::string& path, const std::string& expected_arch) {
  return nn::load_checkpoint_file(path, expected_arch).first;
}

int run_gen_data(const RunConfig& cfg) {
  const DatasetManifest manifest =
      cfg.profile == "balanced" ? balanced_manifest(cfg.seed) : table1_manifest(cfg.seed);
  make_dataset(manifest, cfg.data_dir);
  echo_config(cfg, cfg.data_dir, "gen-data");
  std::printf("wrote %s: train %d, val %d, test %d\n", cfg.data_dir.c_str(),
              manifest.split_total(Split::Train), manifest.split_total(Split::Val),
              manifest.split_total(Split::Test));
  return 0;
}

int run_train_diffusion(const RunConfig& cfg) {
  const DatasetBundle data = load_dataset(cfg.data_dir);
  DiffusionTrainConfig tc;
  tc.epochs = cfg.diffusion_epochs;
  tc.batch = cfg.diffusion_batch;
  tc.lr = cfg.diffusion_lr;
  tc.threads = cfg.threads;
  DiffusionTrainStats stats;
  const nn::ModelParams params =
      train_diffusion(data.train, stage_seed(cfg.seed, "diffusion"), schedule_of(cfg), tc,
                      &stats);

  echo_config(cfg, cfg.out_dir, "train-diffusion");
  nn::CheckpointMeta meta;
  meta.set("stage", "diffusion");
  meta.set("seed", std::to_string(cfg.seed));
  nn::save_checkpoint_file(cfg.out_dir + "/diffusion.ckpt", params, meta);
  for (std::size_t e = 0; e < stats.train_loss.size(); ++e) {
    std::printf("epoch %zu: loss %.4f\n", e, stats.train_loss[e]);
  }
  std::printf("wrote %s/diffusion.ckpt\n", cfg.out_dir.c_str());
  return 0;
}

int run_train_classifier(const RunConfig& cfg, const std::string& role) {
  const DatasetBundle data = load_dataset(cfg.data_dir);
  ClassifierTrainConfig tc;
  tc.epochs = cfg.classifier_epochs;
  tc.batch = cfg.classifier_batch;
  tc.lr = cfg.classifier_lr;
  tc.threads = cfg.threads;
  ClassifierTrainStats stats;
  const nn::ModelParams params = train_classifier(
      data.train, data.val, stage_seed(cfg.seed, "classifier/" + role), tc, &stats);

  echo_config(cfg, cfg.out_dir, "train-classifier-" + role);
  nn::CheckpointMeta meta;
  meta.set("stage", "classifier");
  meta.set("role", role);
  meta.set("seed", std::to_string(cfg.seed));
  const std::string path = cfg.out_dir + "/" + role + "_classifier.ckpt";
  nn::save_checkpoint_file(path, params, meta);
  std::printf("best epoch %d, val loss %.4f, val head accuracy %.4f\n", stats.best_epoch,
              stats.val_loss[stats.best_epoch], stats.val_head_acc[stats.best_epoch]);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int run_finetune(const RunConfig& cfg, const std::string& ckpt, const std::string& clf_path) {
  const std::string start_path = ckpt.empty() ? cfg.out_dir + "/diffusion.ckpt" : ckpt;
  const std::string reward_path =
      clf_path.empty() ? cfg.out_dir + "/reward_classifier.ckpt" : clf_path;
  const nn::ModelParams start = load_params(start_path, nn::kDenoiser16);
  const nn::ModelParams clf = load_params(reward_path, nn::kClassifier16);

  DdpoConfig dc;
  dc.prompts = cfg.prompts.empty() ? default_ddpo_prompts() : cfg.prompts;
  dc.per_prompt = cfg.per_prompt;
  dc.rounds = cfg.rounds;
  dc.clip_eps = cfg.clip_eps;
  dc.lr = cfg.ddpo_lr;
  dc.minibatch = cfg.minibatch;
  dc.max_epochs = cfg.max_epochs;
  dc.stop_tol = cfg.stop_tol;
  dc.stop_window = cfg.stop_window;
  dc.normalize_advantages = cfg.normalize_advantages;
  dc.kl_limit = cfg.kl_limit;
  dc.threads = cfg.threads;

  Rng rng(stage_seed(cfg.seed, "ddpo"));
  const DdpoResult result = ddpo_finetune(start, clf, rng, schedule_of(cfg), dc);

  echo_config(cfg, cfg.out_dir, "finetune-ddpo");
  nn::CheckpointMeta meta;
  meta.set("stage", "ddpo");
  meta.set("seed", std::to_string(cfg.seed));
  nn::save_checkpoint_file(cfg.out_dir + "/ddpo.ckpt", result.params, meta);
  write_history_csv(cfg.out_dir + "/history.csv", result.history);
  if (!result.history.empty()) emit_curves(result.history, cfg.out_dir + "/curves");

  for (const DdpoEpochStats& row : result.history) {
    std::printf("epoch %d: reward %.4f, clip %.3f, kl %.2e%s\n", row.epoch, row.mean_reward,
                row.clip_fraction, row.approx_kl, row.kl_abort ? " (kl abort)" : "");
  }
  if (result.aborted) {
    std::fprintf(stderr, "fine-tuning aborted (%s); last good checkpoint kept\n",
                 result.abort_reason.c_str());
  }
  std::printf("wrote %s/ddpo.ckpt and %s/history.csv\n", cfg.out_dir.c_str(),
              cfg.out_dir.c_str());
  return 0;
}

int run_sample(const RunConfig& cfg, const std::string& ckpt, const std::string& prompt_flag) {
  const std::string path = ckpt.empty() ? cfg.out_dir + "/diffusion.ckpt" : ckpt;
  const nn::ModelParams params = load_params(path, nn::kDenoiser16);
  const std::vector<AttributeVector> prompts = prompts_of(cfg, prompt_flag);
  if (cfg.samples < 1) throw std::runtime_error("samples must be >= 1");

  Rng rng(stage_seed(cfg.seed, "eval/sample"));
  std::vector<nn::Tensor> images;
  std::vector<AttributeVector> labels;
  const VarianceSchedule sched = schedule_of(cfg);
  for (const AttributeVector& c : prompts) {
    std::vector<nn::Tensor> batch =
        sample_images(rng, params, c, cfg.samples, sched, cfg.threads);
    for (auto& img : batch) {
      images.push_back(std::move(img));
      labels.push_back(c);
    }
  }

  echo_config(cfg, cfg.out_dir, "sample");
  const std::string dump = cfg.out_dir + "/samples";
  write_sample_dump(dump, images, labels);
  const std::size_t grid_n = std::min<std::size_t>(images.size(), 16);
  emit_grid(std::vector<nn::Tensor>(images.begin(), images.begin() + grid_n),
            cfg.out_dir + "/grid.pgm");
  std::printf("wrote %zu samples to %s\n", images.size(), dump.c_str());
  return 0;
}

int run_eval_apr(const RunConfig& cfg, const std::string& samples_dir, const std::string& ckpt,
                 const std::string& oracle_path, const std::string& prompt_flag,
                 bool artifacts_only) {
  const std::string opath =
      oracle_path.empty() ? cfg.out_dir + "/oracle_classifier.ckpt" : oracle_path;
  const nn::ModelParams oracle = load_params(opath, nn::kClassifier16);

  std::vector<nn::Tensor> images;
  std::vector<AttributeVector> labels;
  if (!samples_dir.empty()) {
    auto dump = read_sample_dump(samples_dir);
    images = std::move(dump.first);
    labels = std::move(dump.second);
    if (!prompt_flag.empty()) {
      // score the whole dump against the one requested prompt
      labels.assign(images.size(), parse_prompt(prompt_flag));
    }
  } else {
    const std::string path = ckpt.empty() ? cfg.out_dir + "/diffusion.ckpt" : ckpt;
    const nn::ModelParams params = load_params(path, nn::kDenoiser16);
    if (cfg.samples < 1) throw std::runtime_error("samples must be >= 1");
    Rng rng(stage_seed(cfg.seed, "eval/apr"));
    const VarianceSchedule sched = schedule_of(cfg);
    for (const AttributeVector& c : prompts_of(cfg, prompt_flag)) {
      std::vector<nn::Tensor> batch =
          sample_images(rng, params, c, cfg.samples, sched, cfg.threads);
      for (auto& img : batch) {
        images.push_back(std::move(img));
        labels.push_back(c);
      }
    }
  }
  if (images.empty()) throw std::runtime_error("no samples to evaluate");

  // one APR row per distinct prompt, in first-appearance order
  std::vector<AttributeVector> order;
  std::vector<std::vector<nn::Tensor>> groups;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::size_t g = 0;
    for (; g < order.size(); ++g) {
      if (order[g] == labels[i]) break;
    }
    if (g == order.size()) {
      order.push_back(labels[i]);
      groups.emplace_back();
    }
    groups[g].push_back(images[i]);
  }
  std::vector<AprResult> rows;
  for (std::size_t g = 0; g < order.size(); ++g) {
    rows.push_back(apr(groups[g], oracle, order[g], artifacts_only));
  }

  echo_config(cfg, cfg.out_dir, "eval-apr");
  write_apr_csv(cfg.out_dir + "/apr.csv", rows);
  std::fputs(format_apr_table(rows).c_str(), stdout);
  std::printf("wrote %s/apr.csv\n", cfg.out_dir.c_str());
  return 0;
}

int run_eval_cfd(const RunConfig& cfg, const std::string& samples_dir,
                 const std::string& oracle_path) {
  const std::string opath =
      oracle_path.empty() ? cfg.out_dir + "/oracle_classifier.ckpt" : oracle_path;
  const nn::ModelParams oracle = load_params(opath, nn::kClassifier16);
  if (samples_dir.empty()) throw std::runtime_error("eval-cfd requires --samples DIR");

  auto dump = read_sample_dump(samples_dir);
  const DatasetBundle data = load_dataset(cfg.data_dir);
  std::vector<nn::Tensor> real;
  real.reserve(data.test.samples.size());
  for (const ImageSample& s : data.test.samples) real.push_back(s.image);

  const double value = cfd(real, dump.first, oracle);
  echo_config(cfg, cfg.out_dir, "eval-cfd");
  std::ofstream out(cfg.out_dir + "/cfd.txt", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + cfg.out_dir + "/cfd.txt for writing");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g\n", value);
  out << buf;
  std::printf("cfd(real test, %s) = %.6f\n", samples_dir.c_str(), value);
  return 0;
}

int run_eval_augment(const RunConfig& cfg, const std::vector<std::string>& synth_specs) {
  const DatasetBundle data = load_dataset(cfg.data_dir);
  std::vector<NamedSampleSet> sets;
  for (const std::string& spec : synth_specs) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("--synth expects NAME=DIR, got \"" + spec + "\"");
    }
    NamedSampleSet set;
    set.name = spec.substr(0, eq);
    auto dump = read_sample_dump(spec.substr(eq + 1));
    set.images = std::move(dump.first);
    set.labels = std::move(dump.second);
    sets.push_back(std::move(set));
  }

  ClassifierTrainConfig tc;
  tc.epochs = cfg.classifier_epochs;
  tc.batch = cfg.classifier_batch;
  tc.lr = cfg.classifier_lr;
  tc.threads = cfg.threads;
  const auto table = augmentation_experiment(data.train, data.val, sets, data.test,
                                             stage_seed(cfg.seed, "eval/augment"), tc);

  echo_config(cfg, cfg.out_dir, "eval-augment");
  write_report_csv(cfg.out_dir + "/report.csv", table);
  std::fputs(format_report_table(table).c_str(), stdout);
  std::printf("wrote %s/report.csv\n", cfg.out_dir.c_str());
  return 0;
}

int run_report(const RunConfig& cfg) {
  bool found = false;
  const std::string hist_path = cfg.out_dir + "/history.csv";
  if (fs::exists(hist_path)) {
    found = true;
    std::ifstream in(hist_path);
    std::string line;
    std::printf("== %s ==\n", hist_path.c_str());
    while (std::getline(in, line)) std::printf("  %s\n", line.c_str());
  }
  for (const char* name : {"apr.csv", "report.csv", "cfd.txt"}) {
    const std::string path = cfg.out_dir + "/" + name;
    if (!fs::exists(path)) continue;
    found = true;
    std::ifstream in(path);
    std::string line;
    std::printf("== %s ==\n", path.c_str());
    while (std::getline(in, line)) std::printf("  %s\n", line.c_str());
  }
  if (!found) {
    throw std::runtime_error("no result files under " + cfg.out_dir);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage diffusion lab: supervised training plus RL fine-tuning"};
  app.require_subcommand(1);

  CommonArgs gen_args, diff_args, clf_args, ddpo_args, sample_args, apr_args, cfd_args,
      aug_args, report_args;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, gen_args);

  CLI::App* diff = app.add_subcommand("train-diffusion", "stage-1 denoiser training");
  add_common(diff, diff_args);

  CLI::App* clf = app.add_subcommand("train-classifier", "attribute classifier training");
  add_common(clf, clf_args);
  std::string clf_role = "oracle";
  clf->add_option("--role", clf_role, "checkpoint role: oracle or reward")
      ->check(CLI::IsMember({"oracle", "reward"}));

  CLI::App* ddpo = app.add_subcommand("finetune-ddpo", "policy-gradient fine-tuning");
  add_common(ddpo, ddpo_args);
  std::string ddpo_ckpt, ddpo_clf;
  ddpo->add_option("--ckpt", ddpo_ckpt, "denoiser checkpoint to start from");
  ddpo->add_option("--classifier", ddpo_clf, "reward classifier checkpoint");

  CLI::App* sample = app.add_subcommand("sample", "draw images from a checkpoint");
  add_common(sample, sample_args);
  sample_args.samples_opt =
      sample->add_option("--samples", sample_args.samples, "images per prompt");
  std::string sample_ckpt, sample_prompt;
  sample->add_option("--ckpt", sample_ckpt, "denoiser checkpoint");
  sample->add_option("--prompt", sample_prompt, "single prompt text");

  CLI::App* eapr = app.add_subcommand("eval-apr", "attribute prevalence rate");
  add_common(eapr, apr_args);
  apr_args.samples_opt = eapr->add_option("--samples-per-prompt", apr_args.samples,
                                          "images per prompt when sampling");
  std::string apr_samples, apr_ckpt, apr_oracle, apr_prompt;
  bool apr_artifacts_only = false;
  eapr->add_option("--samples", apr_samples, "sample dump directory to score");
  eapr->add_option("--ckpt", apr_ckpt, "denoiser checkpoint to sample from");
  eapr->add_option("--oracle", apr_oracle, "oracle classifier checkpoint");
  eapr->add_option("--prompt", apr_prompt, "single prompt text");
  eapr->add_flag("--artifacts-only", apr_artifacts_only, "match only the four artifact heads");

  CLI::App* ecfd = app.add_subcommand("eval-cfd", "classifier-feature Frechet distance");
  add_common(ecfd, cfd_args);
  std::string cfd_samples, cfd_oracle;
  ecfd->add_option("--samples", cfd_samples, "sample dump directory");
  ecfd->add_option("--oracle", cfd_oracle, "oracle classifier checkpoint");

  CLI::App* eaug = app.add_subcommand("eval-augment", "augmentation study");
  add_common(eaug, aug_args);
  std::vector<std::string> synth_specs;
  eaug->add_option("--synth", synth_specs, "synthetic set as NAME=DIR, repeatable");

  CLI::App* report = app.add_subcommand("report", "print result files from the output dir");
  add_common(report, report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*gen) return run_gen_data(resolve_config(gen_args));
    if (*diff) return run_train_diffusion(resolve_config(diff_args));
    if (*clf) return run_train_classifier(resolve_config(clf_args), clf_role);
    if (*ddpo) return run_finetune(resolve_config(ddpo_args), ddpo_ckpt, ddpo_clf);
    if (*sample) return run_sample(resolve_config(sample_args), sample_ckpt, sample_prompt);
    if (*eapr) {
      return run_eval_apr(resolve_config(apr_args), apr_samples, apr_ckpt, apr_oracle,
                          apr_prompt, apr_artifacts_only);
    }
    if (*ecfd) return run_eval_cfd(resolve_config(cfd_args), cfd_samples, cfd_oracle);
    if (*eaug) return run_eval_augment(resolve_config(aug_args), synth_specs);
    if (*report) return run_report(resolve_config(report_args));
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
  return 1;
}
