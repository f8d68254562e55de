#include "ran/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "ran/ablation.hpp"
#include "ran/checkpoint.hpp"
#include "ran/gradient_suite.hpp"
#include "ran/netpbm.hpp"

namespace fs = std::filesystem;

namespace ran {
namespace {

struct GenDataOptions {
  std::uint64_t seed = 0;
  std::string out;
  int train_count = 200;
  int test_count = 50;
  SceneConfig scene;
};

struct ModelOptions {
  std::string variant = "ran-s";
  int classes = 5;
  int dilation = 1;
  std::vector<double> loss_weights{1.0, 1.0, 1.0};
  bool stop_grad_attention = false;
};

struct TrainOptions {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::int64_t iters = 2000;
  double lr = 0.00025;
  double lr_power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::int64_t batch = 8;
  bool no_augment = false;
  bool save_init = false;
};

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::vector<double> scales{1.0};
  std::string out;
};

struct AblateOptions {
  std::string train_data;
  std::string test_data;
  std::string out;
  int num_seeds = 5;
  std::vector<double> scales{kDefaultMscScales.begin(), kDefaultMscScales.end()};
};

struct HeatmapOptions {
  std::string checkpoint;
  std::string data;
  std::size_t index = 0;
  std::string out;
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--variant", m.variant, "baseline | dual | ran-s | ran-n")
      ->check(CLI::IsMember({"baseline", "dual", "ran-s", "ran-n"}))
      ->capture_default_str();
  cmd->add_option("--classes", m.classes, "number of classes including background")->capture_default_str();
  cmd->add_option("--dilation", m.dilation, "dilation of the decision convolutions")->capture_default_str();
  cmd->add_option("--loss-weights", m.loss_weights, "original,reverse,combined")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  cmd->add_flag("--stop-grad-attention", m.stop_grad_attention, "block gradients through the attention mask");
}

void add_train_options(CLI::App* cmd, TrainOptions& t) {
  cmd->add_option("--seed", t.seed, "seed for initialisation, shuffling and augmentation")->capture_default_str();
  cmd->add_option("--iters", t.iters, "SGD iterations")->capture_default_str();
  cmd->add_option("--lr", t.lr, "base learning rate")->capture_default_str();
  cmd->add_option("--lr-power", t.lr_power, "poly schedule power")->capture_default_str();
  cmd->add_option("--momentum", t.momentum)->capture_default_str();
  cmd->add_option("--weight-decay", t.weight_decay)->capture_default_str();
  cmd->add_option("--batch", t.batch, "batch size")->capture_default_str();
  cmd->add_flag("--no-augment", t.no_augment, "disable scale/mirror augmentation");
}

RanConfig model_config(const ModelOptions& m, std::uint64_t seed) {
  RanConfig cfg;
  cfg.variant = parse_variant(m.variant);
  cfg.num_classes = m.classes;
  cfg.decision_dilation = m.dilation;
  cfg.loss_weights = {m.loss_weights[0], m.loss_weights[1], m.loss_weights[2]};
  cfg.stop_grad_attention = m.stop_grad_attention;
  cfg.seed = seed;
  return cfg.resolved();
}

TrainConfig train_config(const TrainOptions& t) {
  TrainConfig cfg;
  cfg.base_lr = t.lr;
  cfg.lr_power = t.lr_power;
  cfg.momentum = t.momentum;
  cfg.weight_decay = t.weight_decay;
  cfg.max_iter = t.iters;
  cfg.batch_size = t.batch;
  cfg.augment = !t.no_augment;
  cfg.seed = t.seed;
  cfg.validate();
  return cfg;
}

void print_resolved(std::ostream& out, const CLI::App& cmd) {
  out << "# resolved config: " << cmd.get_name() << '\n' << cmd.config_to_str(true, false);
  out.flush();
}

void print_metrics(std::ostream& out, const Metrics& m) {
  out << "pixel_acc " << format_number(m.pixel_acc) << "\nmean_acc " << format_number(m.mean_acc) << "\nmean_iou "
      << format_number(m.mean_iou) << '\n';
  for (std::size_t c = 0; c < m.per_class_iou.size(); ++c)
    out << "iou[" << c << "] " << format_number(m.per_class_iou[c]) << '\n';
}

int gen_data(const GenDataOptions& o, std::ostream& out) {
  SceneConfig scene = o.scene;
  scene.seed = o.seed;
  scene.validate();
  if (o.train_count < 1 || o.test_count < 0) throw ConfigError("gen-data: invalid sample counts");
  const fs::path root(o.out);
  fs::create_directories(root);
  std::vector<Sample> train, test;
  for (int i = 0; i < o.train_count; ++i) train.push_back(generate_scene(scene, static_cast<std::uint64_t>(i)));
  for (int i = 0; i < o.test_count; ++i)
    test.push_back(generate_scene(scene, static_cast<std::uint64_t>(o.train_count + i)));
  write_manifest(write_samples(train, root / "train", "train", root), root / "train.txt");
  write_manifest(write_samples(test, root / "test", "test", root), root / "test.txt");
  out << "wrote " << train.size() << " training and " << test.size() << " test samples to " << root.string() << '\n';
  return kExitOk;
}

int train_cmd(const ModelOptions& m, const TrainOptions& t, std::ostream& out) {
  const RanConfig mc = model_config(m, t.seed);
  const TrainConfig tc = train_config(t);
  const auto data = load_dataset(t.data);
  const fs::path dir(t.out);
  fs::create_directories(dir);

  RanModel model(mc);
  if (t.save_init) save_checkpoint(model, dir / "init.ckpt");
  const std::int64_t every = std::max<std::int64_t>(1, tc.max_iter / 20);
  const TrainResult result = train(model, data, tc, [&out, every](const LogRow& r) {
    if (r.iter % every == 0) out << "iter " << r.iter << " lr " << format_number(r.lr) << " total "
                                 << format_number(r.total) << '\n';
  });
  save_checkpoint(Checkpoint::from_model(model, static_cast<std::uint64_t>(tc.max_iter), result.momentum),
                  dir / "checkpoint.ckpt");
  write_train_log(result.log, dir / "train_log.csv");
  out << "initial total loss " << format_number(result.log.front().total) << ", final "
      << format_number(result.log.back().total) << '\n';
  out << "wrote " << (dir / "checkpoint.ckpt").string() << " and " << (dir / "train_log.csv").string() << '\n';
  return kExitOk;
}

int eval_cmd(const EvalOptions& e, std::ostream& out) {
  const RanModel model = load_checkpoint(e.checkpoint).to_model();
  const auto data = load_dataset(e.data);
  const Metrics m = evaluate(model, data, e.scales);
  print_metrics(out, m);
  if (!e.out.empty()) {
    std::string csv = "pixel_acc,mean_acc,mean_iou";
    for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) csv += ",iou_" + std::to_string(c);
    csv += '\n' + format_number(m.pixel_acc) + ',' + format_number(m.mean_acc) + ',' + format_number(m.mean_iou);
    for (double v : m.per_class_iou) csv += ',' + format_number(v);
    csv += '\n';
    write_file({csv.begin(), csv.end()}, e.out);
  }
  return kExitOk;
}

int ablate_cmd(const ModelOptions& m, const TrainOptions& t, const AblateOptions& a, std::ostream& out) {
  if (a.num_seeds < 1) throw ConfigError("ablate: --num-seeds must be at least 1");
  const RanConfig base = model_config(m, t.seed);
  const TrainConfig tc = train_config(t);
  const auto train_set = load_dataset(a.train_data);
  const auto test_set = load_dataset(a.test_data);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < a.num_seeds; ++i) seeds.push_back(t.seed + static_cast<std::uint64_t>(i));

  const AblationResult result = ablate(base, train_set, test_set, tc, seeds, a.scales, [&out](const AblationRun& r) {
    out << variant_name(r.variant) << " seed " << r.seed << ": mean_iou " << format_number(r.single_scale.mean_iou)
        << " (msc " << format_number(r.multi_scale.mean_iou) << "), loss " << format_number(r.initial_loss) << " -> "
        << format_number(r.final_loss) << ", " << format_number(r.seconds) << " s\n";
    out.flush();
  });
  out << format_ablation_csv(result.rows);
  write_ablation_csv(result.rows, a.out);
  return kExitOk;
}

int gradcheck_cmd(std::uint64_t seed, std::ostream& out) {
  bool ok = true;
  for (const auto& c : run_gradient_suite(seed)) {
    out << (c.passed() ? "ok   " : "FAIL ") << c.name << " max_rel_error " << format_number(c.report.max_rel_error)
        << " over " << c.report.elements_checked << " elements\n";
    ok = ok && c.passed();
  }
  out << (ok ? "all gradients within " : "gradient check failed; tolerance ") << format_number(kGradientTolerance)
      << '\n';
  return ok ? kExitOk : kExitRuntime;
}

// Per-map min-max normalisation to [0, 255].
LabelMap to_grey(const Tensor& t, Index n, Index c, double& lo, double& hi) {
  const double* p = t.plane(n, c);
  const Index size = t.shape.plane();
  lo = *std::min_element(p, p + size);
  hi = *std::max_element(p, p + size);
  LabelMap g(1, t.shape.h, t.shape.w);
  for (Index i = 0; i < size; ++i) {
    const double v = hi > lo ? (p[i] - lo) / (hi - lo) : 0.0;
    g.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return g;
}

int heatmaps_cmd(const HeatmapOptions& h, std::ostream& out) {
  const RanModel model = load_checkpoint(h.checkpoint).to_model();
  const auto data = load_dataset(h.data);
  if (h.index >= data.size()) throw ConfigError("heatmaps: --index beyond dataset size");
  Graph g;
  const BranchOutputs maps = forward(bind(g, model, false), g.constant(data[h.index].image)).materialize();
  const fs::path dir(h.out);
  fs::create_directories(dir);
  const std::pair<const char*, const Tensor*> named[] = {
      {"F_org", &maps.original}, {"F_rev", &maps.reverse}, {"I_ra", &maps.attention}, {"F_combined", &maps.combined}};
  for (const auto& [name, tensor] : named) {
    if (tensor->size() == 0) continue;
    for (Index c = 0; c < tensor->shape.c; ++c) {
      double lo = 0, hi = 0;
      const auto path = dir / (std::string(name) + "_class" + std::to_string(c) + ".pgm");
      write_pgm(to_grey(*tensor, 0, c, lo, hi), path);
      out << name << " class " << c << " min " << format_number(lo) << " max " << format_number(hi) << " -> "
          << path.string() << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reverse-attention segmentation toolkit", args.empty() ? "ran" : args.front()};
  app.require_subcommand(1);
  app.allow_extras(false);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic corpus and manifests");
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--train-count", gen.train_count)->capture_default_str();
  gen_cmd->add_option("--test-count", gen.test_count)->capture_default_str();
  gen_cmd->add_option("--classes", gen.scene.num_classes)->capture_default_str();
  gen_cmd->add_option("--height", gen.scene.height)->capture_default_str();
  gen_cmd->add_option("--width", gen.scene.width)->capture_default_str();
  gen_cmd->add_option("--min-shapes", gen.scene.min_shapes)->capture_default_str();
  gen_cmd->add_option("--max-shapes", gen.scene.max_shapes)->capture_default_str();
  gen_cmd->add_option("--texture-overlap", gen.scene.texture_overlap)->capture_default_str();
  gen_cmd->add_option("--noise", gen.scene.noise_std)->capture_default_str();

  ModelOptions train_model;
  TrainOptions train_opts;
  auto* train_sub = app.add_subcommand("train", "train one variant and write checkpoint + log");
  train_sub->add_option("--data", train_opts.data, "training manifest")->required();
  train_sub->add_option("--out", train_opts.out, "output directory")->required();
  add_model_options(train_sub, train_model);
  add_train_options(train_sub, train_opts);
  train_sub->add_flag("--save-init", train_opts.save_init, "also write the initial parameters to init.ckpt");

  EvalOptions eval_opts;
  auto* eval_sub = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  eval_sub->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval_sub->add_option("--data", eval_opts.data, "evaluation manifest")->required();
  eval_sub->add_option("--scales", eval_opts.scales, "comma-separated input scales")
      ->delimiter(',')
      ->capture_default_str();
  eval_sub->add_option("--out", eval_opts.out, "optional metrics CSV");

  ModelOptions ablate_model;
  TrainOptions ablate_train;
  AblateOptions ablate_opts;
  auto* ablate_sub = app.add_subcommand("ablate", "train and evaluate all four variants over several seeds");
  ablate_sub->add_option("--train-data", ablate_opts.train_data)->required();
  ablate_sub->add_option("--test-data", ablate_opts.test_data)->required();
  ablate_sub->add_option("--out", ablate_opts.out, "ablation CSV path")->required();
  ablate_sub->add_option("--num-seeds", ablate_opts.num_seeds, "seeds used: seed, seed+1, ...")->capture_default_str();
  ablate_sub->add_option("--scales", ablate_opts.scales, "MSC scales")->delimiter(',')->capture_default_str();
  add_model_options(ablate_sub, ablate_model);
  add_train_options(ablate_sub, ablate_train);

  std::uint64_t gradcheck_seed = 0;
  auto* grad_sub = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  grad_sub->add_option("--seed", gradcheck_seed)->capture_default_str();

  HeatmapOptions heat;
  auto* heat_sub = app.add_subcommand("heatmaps", "write per-class branch maps of one sample as PGM");
  heat_sub->add_option("--checkpoint", heat.checkpoint)->required();
  heat_sub->add_option("--data", heat.data, "manifest")->required();
  heat_sub->add_option("--index", heat.index, "sample index in the manifest")->capture_default_str();
  heat_sub->add_option("--out", heat.out, "output directory")->required();

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    const CLI::App* chosen = app.get_subcommands().front();
    print_resolved(out, *chosen);
    if (chosen == gen_cmd) return gen_data(gen, out);
    if (chosen == train_sub) return train_cmd(train_model, train_opts, out);
    if (chosen == eval_sub) return eval_cmd(eval_opts, out);
    if (chosen == ablate_sub) return ablate_cmd(ablate_model, ablate_train, ablate_opts, out);
    if (chosen == grad_sub) return gradcheck_cmd(gradcheck_seed, out);
    if (chosen == heat_sub) return heatmaps_cmd(heat, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ran
