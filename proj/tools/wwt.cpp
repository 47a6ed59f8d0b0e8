/* Copyright 2026 The WWT Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line entry point. Failures print one line "error <Class>: message"
// on stderr and exit with status 2 (usage errors: 64).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wwt/datasets.hpp"
#include "wwt/errors.hpp"
#include "wwt/trainer.hpp"

namespace fs = std::filesystem;
using namespace wwt;

namespace {

data::Dataset dataset_for(const train::RunConfig& cfg, const std::string& dir_override) {
  const std::string dir = dir_override.empty() ? cfg.data_dir : dir_override;
  if (!dir.empty()) return data::load(dir);
  return data::generate(cfg.data);
}

std::vector<data::Scene> split_of(const train::RunConfig& cfg, const std::string& split,
                                  const std::string& data_dir, std::size_t single_size) {
  if (split == "single") {
    return data::generate(data::single_object_spec(cfg.data, single_size)).val;
  }
  data::Dataset ds = dataset_for(cfg, data_dir);
  if (split == "train") return std::move(ds.train);
  if (split == "val") return std::move(ds.val);
  throw ConfigError("unknown split '" + split + "' (train, val or single)");
}

void progress(const train::EpochRecord& r) {
  std::printf("epoch %zu steps %zu loss %.5f cls %.5f aux %.5f val_acc %.4f %.1fs\n", r.epoch,
              r.steps, r.loss, r.loss_cls, r.loss_aux, r.val_accuracy, r.wall_seconds);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"What-Where Transformer toolkit"};
  app.require_subcommand(1);

  std::string spec_path, out, config_path, task, init, ckpt, split = "val", data_dir, image;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double tau = 0.5;
  std::size_t single_size = 300, count = 4, cls = 2;
  double sprite = 16;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic sprite dataset");
  gen->add_option("--spec", spec_path, "GenSpec key=value file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Pretrain with classification + autoencoding");
  tr->add_option("--config", config_path, "RunConfig key=value file")->required();
  tr->add_option("--seed", seed, "Run seed")->each([&](const std::string&) { seed_set = true; });
  tr->add_option("--out", out, "Output directory")->required();

  auto* ft = app.add_subcommand("finetune", "Finetune a checkpoint for detect, segment or ocl");
  ft->add_option("--task", task, "detect | segment | ocl")->required();
  ft->add_option("--init", init, "Initial checkpoint")->required();
  ft->add_option("--config", config_path, "RunConfig overrides (defaults: the checkpoint's)");
  ft->add_option("--seed", seed, "Run seed")->each([&](const std::string&) { seed_set = true; });
  ft->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--task", task, "classify | discover | segment | detect | ocl | explain")->required();
  ev->add_option("--ckpt", ckpt, "Checkpoint")->required();
  ev->add_option("--split", split, "train | val | single");
  ev->add_option("--data", data_dir, "Saved dataset directory");
  ev->add_option("--tau", tau, "Discovery threshold");
  ev->add_option("--single-size", single_size, "Scenes in the single-object split");
  ev->add_option("--out", out, "Report stem (writes .txt/.json and interchange files)");

  auto* di = app.add_subcommand("discover", "Object proposals for one PPM image");
  di->add_option("--ckpt", ckpt, "Checkpoint")->required();
  di->add_option("--image", image, "PPM image")->required();
  di->add_option("--tau", tau, "Binarization threshold");

  auto* pr = app.add_subcommand("probe-invariance", "Slot vs token translation probe");
  pr->add_option("--ckpt", ckpt, "Checkpoint")->required();
  pr->add_option("--class", cls, "Sprite class");
  pr->add_option("--size", sprite, "Sprite size in pixels");
  pr->add_option("--out", out, "Directory for report.txt and plot.csv");

  auto* fl = app.add_subcommand("flops", "Multiply-accumulate report");
  fl->add_option("--config", config_path, "RunConfig file (default: WWT-Micro)");

  auto* vz = app.add_subcommand("viz", "Export mask, CA, segmentation and box overlays");
  vz->add_option("--ckpt", ckpt, "Checkpoint")->required();
  vz->add_option("--out", out, "Output directory")->required();
  vz->add_option("--count", count, "Number of validation images");
  vz->add_option("--tau", tau, "Discovery threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error UsageError: " << e.what() << "\n";
    return 64;
  }

  try {
    if (*gen) {
      const data::GenSpec spec = data::spec_from_text(data::read_file(spec_path));
      data::save(data::generate(spec), out);
      std::printf("wrote %zu train / %zu val scenes to %s\n", spec.train_size, spec.val_size, out.c_str());
    } else if (*tr) {
      train::RunConfig cfg = train::RunConfig::from_file(config_path);
      if (seed_set) cfg.seed = seed;
      cfg.out_dir = out;
      train::train(cfg, dataset_for(cfg, ""), std::nullopt, progress);
      std::printf("checkpoint %s\n", (fs::path(out) / "final.ckpt").c_str());
    } else if (*ft) {
      train::RunConfig cfg = config_path.empty() ? train::load_run_config(init)
                                                 : train::RunConfig::from_file(config_path);
      cfg.task = train::parse_task(task);
      if (seed_set) cfg.seed = seed;
      cfg.out_dir = out;
      cfg.validate();
      ParamMap<float> params = load_checkpoint(init);
      train::train(cfg, dataset_for(cfg, ""), std::move(params), progress);
      std::printf("checkpoint %s\n", (fs::path(out) / "final.ckpt").c_str());
    } else if (*ev) {
      const train::RunConfig cfg = train::load_run_config(ckpt);
      train::EvalOptions opts;
      opts.discovery.tau = tau;
      opts.out_stem = out;
      const auto rep = train::evaluate(train::parse_eval_task(task), load_checkpoint(ckpt), cfg.model,
                                       split_of(cfg, split, data_dir, single_size), opts);
      std::cout << rep.to_text();
    } else if (*di) {
      const train::RunConfig cfg = train::load_run_config(ckpt);
      const Tensor<float> img = data::decode_ppm(data::read_file(image), image);
      if (img.dim(0) != cfg.model.image_size || img.dim(1) != cfg.model.image_size) {
        throw DimensionError("image is " + std::to_string(img.dim(1)) + "x" +
                             std::to_string(img.dim(0)) + ", model expects " +
                             std::to_string(cfg.model.image_size));
      }
      const auto inf = train::infer(load_checkpoint(ckpt), cfg.model,
                                    img.reshaped(Shape{1, img.dim(0), img.dim(1), 3}));
      DiscoveryOptions opts;
      opts.tau = tau;
      const auto res = train::discover(inf, cfg.model, opts);
      std::printf("# slot head x0 y0 x1 y1 area concentration\n");
      for (const auto& p : res[0].proposals) {
        std::printf("%zu %zu %g %g %g %g %zu %.6f\n", p.slot, p.head, p.box.x0, p.box.y0, p.box.x1,
                    p.box.y1, p.mask.area(), p.concentration);
      }
      if (res[0].selected) {
        const Box& b = *res[0].selected;
        std::printf("selected %g %g %g %g\n", b.x0, b.y0, b.x1, b.y1);
      } else {
        std::printf("selected none\n");
      }
    } else if (*pr) {
      const train::RunConfig cfg = train::load_run_config(ckpt);
      const long P = static_cast<long>(cfg.model.patch_size);
      const auto rep = train::probe_invariance(load_checkpoint(ckpt), cfg.model, cls,
                                               {{0, 0}, {P, 0}, {2 * P, 0}, {3 * P, 0}}, sprite);
      std::cout << rep.to_text();
      if (!out.empty()) {
        fs::create_directories(out);
        data::write_file((fs::path(out) / "report.txt").string(), rep.to_text());
        data::write_file((fs::path(out) / "plot.csv").string(), rep.to_csv());
      }
    } else if (*fl) {
      const WwtConfig mc =
          config_path.empty() ? micro_config() : train::RunConfig::from_file(config_path).model;
      std::cout << train::flops_report(mc);
    } else if (*vz) {
      const train::RunConfig cfg = train::load_run_config(ckpt);
      data::GenSpec spec = cfg.data;
      spec.train_size = 0;
      spec.val_size = count;
      DiscoveryOptions opts;
      opts.tau = tau;
      const auto paths = train::export_overlays(load_checkpoint(ckpt), cfg.model,
                                                data::generate(spec).val, out, opts);
      std::printf("wrote %zu overlays to %s\n", paths.size(), out.c_str());
    }
  } catch (const Error& e) {
    std::cerr << "error " << e.error_class() << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error InternalError: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
