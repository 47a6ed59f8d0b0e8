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

#include "wwt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "wwt/errors.hpp"
#include "wwt/rng.hpp"

namespace wwt::train {

namespace fs = std::filesystem;
using ad::Var;

std::string to_string(Task t) {
  switch (t) {
    case Task::kClassify: return "classify";
    case Task::kDetect: return "detect";
    case Task::kSegment: return "segment";
    case Task::kOcl: return "ocl";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "classify") return Task::kClassify;
  if (s == "detect") return Task::kDetect;
  if (s == "segment") return Task::kSegment;
  if (s == "ocl") return Task::kOcl;
  throw ConfigError("unknown task '" + s + "'");
}

// ---------------------------------------------------------------------------
// RunConfig serialization.

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename M>
Field num(M RunConfig::*member) {
  return {[member](const RunConfig& c) {
            std::ostringstream os;
            os.precision(17);
            os << c.*member;
            return os.str();
          },
          [member](RunConfig& c, const std::string& v) {
            std::istringstream is(v);
            M out{};
            if (!(is >> out) || !(is >> std::ws).eof()) throw std::invalid_argument(v);
            c.*member = out;
          }};
}

template <typename S, typename M>
Field nested(S RunConfig::*outer, M S::*member) {
  return {[=](const RunConfig& c) {
            std::ostringstream os;
            os.precision(17);
            os << std::boolalpha << (c.*outer).*member;
            return os.str();
          },
          [=](RunConfig& c, const std::string& v) {
            std::istringstream is(v);
            M out{};
            if (!(is >> std::boolalpha >> out) || !(is >> std::ws).eof()) throw std::invalid_argument(v);
            (c.*outer).*member = out;
          }};
}

Field boolean(bool RunConfig::*member) {
  return {[member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](RunConfig& c, const std::string& v) {
            if (v == "true" || v == "1") c.*member = true;
            else if (v == "false" || v == "0") c.*member = false;
            else throw std::invalid_argument(v);
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> f = [] {
    std::vector<std::pair<std::string, Field>> v;
    using W = WwtConfig;
    v.emplace_back("model.image_size", nested(&RunConfig::model, &W::image_size));
    v.emplace_back("model.patch_size", nested(&RunConfig::model, &W::patch_size));
    v.emplace_back("model.dim", nested(&RunConfig::model, &W::dim));
    v.emplace_back("model.slots", nested(&RunConfig::model, &W::slots));
    v.emplace_back("model.heads", nested(&RunConfig::model, &W::heads));
    v.emplace_back("model.blocks", nested(&RunConfig::model, &W::blocks));
    v.emplace_back("model.mlp_hidden_t", nested(&RunConfig::model, &W::mlp_hidden_t));
    v.emplace_back("model.mlp_hidden_s", nested(&RunConfig::model, &W::mlp_hidden_s));
    v.emplace_back("model.mlp_hidden_a", nested(&RunConfig::model, &W::mlp_hidden_a));
    v.emplace_back("model.num_classes", nested(&RunConfig::model, &W::num_classes));
    v.emplace_back("model.softmax_axis_mode",
                   Field{[](const RunConfig& c) {
                           return std::string(c.model.softmax_axis_mode == SoftmaxAxisMode::kSwapped
                                                  ? "swapped"
                                                  : "literal");
                         },
                         [](RunConfig& c, const std::string& s) {
                           if (s == "literal") c.model.softmax_axis_mode = SoftmaxAxisMode::kLiteral;
                           else if (s == "swapped") c.model.softmax_axis_mode = SoftmaxAxisMode::kSwapped;
                           else throw std::invalid_argument(s);
                         }});
    v.emplace_back("model.prenorm", nested(&RunConfig::model, &W::prenorm));
    v.emplace_back("model.mask_mlp", nested(&RunConfig::model, &W::mask_mlp));
    v.emplace_back("model.ln_eps", nested(&RunConfig::model, &W::ln_eps));
    v.emplace_back("model.pixel_mean", nested(&RunConfig::model, &W::pixel_mean));
    v.emplace_back("model.pixel_std", nested(&RunConfig::model, &W::pixel_std));
    v.emplace_back("model.head_hidden", nested(&RunConfig::model, &W::head_hidden));
    v.emplace_back("model.decoder_hidden", nested(&RunConfig::model, &W::decoder_hidden));
    v.emplace_back("model.det_hidden", nested(&RunConfig::model, &W::det_hidden));
    v.emplace_back("model.teacher_dim", nested(&RunConfig::model, &W::teacher_dim));
    using G = data::GenSpec;
    v.emplace_back("data.seed", nested(&RunConfig::data, &G::seed));
    v.emplace_back("data.image_size", nested(&RunConfig::data, &G::image_size));
    v.emplace_back("data.num_classes", nested(&RunConfig::data, &G::num_classes));
    v.emplace_back("data.min_instances", nested(&RunConfig::data, &G::min_instances));
    v.emplace_back("data.max_instances", nested(&RunConfig::data, &G::max_instances));
    v.emplace_back("data.min_scale", nested(&RunConfig::data, &G::min_scale));
    v.emplace_back("data.max_scale", nested(&RunConfig::data, &G::max_scale));
    v.emplace_back("data.distractor_min_scale", nested(&RunConfig::data, &G::distractor_min_scale));
    v.emplace_back("data.distractor_max_scale", nested(&RunConfig::data, &G::distractor_max_scale));
    v.emplace_back("data.background",
                   Field{[](const RunConfig& c) { return data::to_string(c.data.background); },
                         [](RunConfig& c, const std::string& s) {
                           c.data.background = data::parse_background(s);
                         }});
    v.emplace_back("data.train_size", nested(&RunConfig::data, &G::train_size));
    v.emplace_back("data.val_size", nested(&RunConfig::data, &G::val_size));
    v.emplace_back("data_dir", Field{[](const RunConfig& c) { return c.data_dir; },
                                     [](RunConfig& c, const std::string& s) { c.data_dir = s; }});
    v.emplace_back("task", Field{[](const RunConfig& c) { return to_string(c.task); },
                                 [](RunConfig& c, const std::string& s) { c.task = parse_task(s); }});
    v.emplace_back("lambda_cls", num(&RunConfig::lambda_cls));
    v.emplace_back("lambda_ae", num(&RunConfig::lambda_ae));
    v.emplace_back("label_smoothing", num(&RunConfig::label_smoothing));
    v.emplace_back("ocl_keep", num(&RunConfig::ocl_keep));
    v.emplace_back("lambda_distill", num(&RunConfig::lambda_distill));
    v.emplace_back("freeze_backbone", boolean(&RunConfig::freeze_backbone));
    v.emplace_back("det.cls", nested(&RunConfig::det, &DetectionWeights::cls));
    v.emplace_back("det.l1", nested(&RunConfig::det, &DetectionWeights::l1));
    v.emplace_back("det.giou", nested(&RunConfig::det, &DetectionWeights::giou));
    v.emplace_back("det.bg", nested(&RunConfig::det, &DetectionWeights::bg));
    v.emplace_back("optim.lr", nested(&RunConfig::optim, &AdamWConfig::lr));
    v.emplace_back("optim.beta1", nested(&RunConfig::optim, &AdamWConfig::beta1));
    v.emplace_back("optim.beta2", nested(&RunConfig::optim, &AdamWConfig::beta2));
    v.emplace_back("optim.eps", nested(&RunConfig::optim, &AdamWConfig::eps));
    v.emplace_back("optim.weight_decay", nested(&RunConfig::optim, &AdamWConfig::weight_decay));
    v.emplace_back("min_lr", num(&RunConfig::min_lr));
    v.emplace_back("warmup_epochs", num(&RunConfig::warmup_epochs));
    v.emplace_back("epochs", num(&RunConfig::epochs));
    v.emplace_back("batch_size", num(&RunConfig::batch_size));
    v.emplace_back("max_steps", num(&RunConfig::max_steps));
    v.emplace_back("hflip", boolean(&RunConfig::hflip));
    v.emplace_back("stop_at_accuracy", num(&RunConfig::stop_at_accuracy));
    v.emplace_back("seed", num(&RunConfig::seed));
    v.emplace_back("checkpoint_every", num(&RunConfig::checkpoint_every));
    v.emplace_back("out_dir", Field{[](const RunConfig& c) { return c.out_dir; },
                                    [](RunConfig& c, const std::string& s) { c.out_dir = s; }});
    return v;
  }();
  return f;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  data.validate();
  if (data.image_size != model.image_size) {
    throw ConfigError("data.image_size " + std::to_string(data.image_size) +
                      " differs from model.image_size " + std::to_string(model.image_size));
  }
  if (data.num_classes != model.num_classes) throw ConfigError("data/model class counts differ");
  if (data.max_instances > model.slots) throw ConfigError("more instances per scene than slots");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (label_smoothing < 0 || label_smoothing >= 1) throw ConfigError("label_smoothing must be in [0,1)");
  if (lambda_ae < 0 || lambda_cls < 0 || lambda_distill < 0) throw ConfigError("negative loss weight");
  if (ocl_keep == 0 || ocl_keep > model.slots) throw ConfigError("ocl_keep must be in [1, slots]");
  if (!(optim.lr > 0)) throw ConfigError("optim.lr must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + "=" + f.get(*this) + "\n";
  return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = std::find_if(fields().begin(), fields().end(),
                           [&](const auto& kv) { return kv.first == key; });
    if (it == fields().end()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second.set(c, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" + value +
                        "' for " + key);
    }
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_text(data::read_file(path));
}

// ---------------------------------------------------------------------------

void RunLog::append(const EpochRecord& r) {
  if (!records_.empty() && r.epoch <= records_.back().epoch) {
    throw ValueError("run log epochs must increase");
  }
  records_.push_back(r);
}

std::string RunLog::to_text() const {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,steps,loss,loss_cls,loss_aux,val_accuracy,wall_seconds\n";
  for (const auto& r : records_) {
    os << r.epoch << "," << r.steps << "," << r.loss << "," << r.loss_cls << "," << r.loss_aux
       << "," << r.val_accuracy << "," << r.wall_seconds << "\n";
  }
  return os.str();
}

void RunLog::write(const std::string& path) const { data::write_file(path, to_text()); }

// ---------------------------------------------------------------------------

ParamMap<float> init_params(const RunConfig& cfg) {
  ParamMap<float> p = init_backbone_params(cfg.model, cfg.seed);
  add_head_params(p, cfg.model, HeadKind::kClassify, cfg.seed);
  add_head_params(p, cfg.model, HeadKind::kAutoencode, cfg.seed);
  return p;
}

namespace {

void add_task_heads(ParamMap<float>& p, const RunConfig& cfg) {
  auto ensure = [&](HeadKind h) {
    if (!has_head(p, h)) add_head_params(p, cfg.model, h, cfg.seed + 1);
  };
  ensure(HeadKind::kClassify);
  ensure(HeadKind::kAutoencode);
  if (cfg.task == Task::kDetect) ensure(HeadKind::kDetect);
  if (cfg.task == Task::kOcl) ensure(HeadKind::kDistill);
}

bool is_head(const std::string& name) {
  for (const char* prefix : {"cls.", "ae.", "distill.", "det."}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

std::vector<std::size_t> labels_of(const std::vector<const data::Scene*>& batch) {
  std::vector<std::size_t> out;
  for (const data::Scene* s : batch) out.push_back(s->image_label);
  return out;
}

// Token-level target distribution for segmentation: the majority pixel label
// of each patch, one-hot for classes and uniform for background.
Tensor<float> segmentation_targets(const std::vector<const data::Scene*>& batch,
                                   const WwtConfig& cfg) {
  const std::size_t B = batch.size(), G = cfg.grid(), P = cfg.patch_size, C = cfg.num_classes;
  Tensor<float> q(Shape{B, G * G, C});
  for (std::size_t b = 0; b < B; ++b) {
    const metrics::LabelMap lm = data::label_map(*batch[b]);
    for (std::size_t t = 0; t < G * G; ++t) {
      std::vector<std::size_t> counts(C + 1, 0);
      for (std::size_t y = 0; y < P; ++y) {
        for (std::size_t x = 0; x < P; ++x) {
          ++counts[lm.labels[((t / G) * P + y) * lm.width + (t % G) * P + x]];
        }
      }
      const auto best =
          static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      for (std::size_t c = 0; c < C; ++c) {
        q[(b * G * G + t) * C + c] = best == C ? 1.0f / static_cast<float>(C) : (c == best ? 1.0f : 0.0f);
      }
    }
  }
  return q;
}

}  // namespace

template <typename T>
Var<T> batch_loss(const ParamBinding<T>& p, const RunConfig& cfg,
                  const std::vector<const data::Scene*>& batch, const Tensor<float>& pixels,
                  const ParamMap<float>* teacher, StepLosses* parts) {
  ad::Tape<T>& tape = p.tape();
  const WwtConfig& mc = cfg.model;
  const Tensor<float> normalized = normalize_pixels(pixels, mc);
  const Var<T> images = tape.constant(normalized.cast<T>());
  const ForwardResult<T> fwd = wwt_forward(p, mc, images);
  const Var<T> z = fwd.out.z;
  const Var<T> A = reduce_heads(fwd.out.A);
  const std::vector<std::size_t> labels = labels_of(batch);

  std::optional<Var<T>> cls, aux;
  auto add_term = [](std::optional<Var<T>>& acc, const Var<T>& v) {
    acc = acc ? ad::add(*acc, v) : v;
  };
  switch (cfg.task) {
    case Task::kClassify:
    case Task::kOcl: {
      if (cfg.lambda_cls > 0) {
        cls = ad::scale(cross_entropy(classify(p, mc, z).image_logits, labels, cfg.label_smoothing),
                        cfg.lambda_cls);
      }
      const std::size_t keep = cfg.task == Task::kOcl ? cfg.ocl_keep : 0;
      if (cfg.lambda_ae > 0) {
        add_term(aux, ad::scale(autoencode_loss(p, mc, A, z, images, false, keep), cfg.lambda_ae));
      }
      if (cfg.task == Task::kOcl && cfg.lambda_distill > 0) {
        if (!teacher) throw ConfigError("OCL finetuning needs teacher parameters");
        const Var<T> target = tape.constant(teacher_features(*teacher, mc, normalized).cast<T>());
        add_term(aux, ad::scale(autoencode_loss(p, mc, A, z, target, true, keep), cfg.lambda_distill));
      }
      break;
    }
    case Task::kSegment: {
      const SlotClassLogits<T> out = classify(p, mc, z);
      if (cfg.lambda_cls > 0) {
        cls = ad::scale(cross_entropy(out.image_logits, labels, cfg.label_smoothing), cfg.lambda_cls);
      }
      const Var<T> scores =
          ad::matmul(ad::softmax_along(A, 2), ad::softmax_along(out.slot_logits, 2));
      const Var<T> q = tape.constant(segmentation_targets(batch, mc).cast<T>());
      const double n = static_cast<double>(batch.size() * mc.tokens());
      aux = ad::scale(ad::sum(ad::mul(q, ad::log(ad::add_scalar(scores, 1e-6)))), -1.0 / n);
      break;
    }
    case Task::kDetect: {
      const DetOutputs<T> det = detect(p, mc, fwd.out.x, A, z);
      const std::size_t S = mc.slots, K = mc.num_classes + 1;
      const double N = static_cast<double>(mc.image_size);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Var<T> boxes = ad::reshape(ad::slice(det.boxes, 0, b, 1), Shape{S, 4});
        const Var<T> logits = ad::reshape(ad::slice(det.logits, 0, b, 1), Shape{S, K});
        std::vector<GtObject> gts;
        for (const data::Instance& inst : batch[b]->instances) {
          const Box& bx = inst.box;
          gts.push_back({{(bx.x0 + bx.x1) / (2 * N), (bx.y0 + bx.y1) / (2 * N),
                          (bx.x1 - bx.x0) / N, (bx.y1 - bx.y0) / N},
                         inst.cls});
        }
        const Tensor<float> bv = boxes.value().template cast<float>();
        const Tensor<float> pv = ad::softmax_values(logits.value(), 1).template cast<float>();
        const Assignment asg = match_bipartite(bv, pv, gts, cfg.det);
        add_term(aux, detection_loss(boxes, logits, gts, asg, cfg.det).total);
      }
      aux = ad::scale(*aux, 1.0 / static_cast<double>(batch.size()));
      break;
    }
  }
  if (!cls && !aux) throw ConfigError("every loss term is disabled");
  const Var<T> total = cls && aux ? ad::add(*cls, *aux) : (cls ? *cls : *aux);
  if (parts) {
    parts->total = static_cast<double>(total.value().item());
    parts->cls = cls ? static_cast<double>(cls->value().item()) : 0.0;
    parts->aux = aux ? static_cast<double>(aux->value().item()) : 0.0;
  }
  return total;
}

template Var<float> batch_loss(const ParamBinding<float>&, const RunConfig&,
                               const std::vector<const data::Scene*>&, const Tensor<float>&,
                               const ParamMap<float>*, StepLosses*);
template Var<double> batch_loss(const ParamBinding<double>&, const RunConfig&,
                                const std::vector<const data::Scene*>&, const Tensor<float>&,
                                const ParamMap<float>*, StepLosses*);

// ---------------------------------------------------------------------------

namespace {

// Every tensor the config implies must be present with the same shape.
void check_compatible(const ParamMap<float>& params, const WwtConfig& cfg) {
  ParamMap<float> expected = init_backbone_params(cfg, 0);
  for (HeadKind h : {HeadKind::kClassify, HeadKind::kAutoencode, HeadKind::kDistill, HeadKind::kDetect}) {
    if (has_head(params, h)) add_head_params(expected, cfg, h, 0);
  }
  for (const auto& [name, t] : expected) {
    const auto it = params.find(name);
    if (it == params.end()) throw DimensionError("checkpoint lacks parameter " + name);
    if (it->second.shape() != t.shape()) {
      throw DimensionError("checkpoint parameter " + name + " has shape " +
                           wwt::to_string(it->second.shape()) + ", config expects " +
                           wwt::to_string(t.shape()));
    }
  }
  for (const auto& [name, t] : params) {
    if (!expected.count(name)) throw DimensionError("checkpoint has unexpected parameter " + name);
  }
}

}  // namespace

Trainer::Trainer(RunConfig config, ParamMap<float> init)
    : cfg(std::move(config)), params(std::move(init)) {
  cfg.validate();
  check_compatible(params, cfg.model);
  add_task_heads(params, cfg);
  if (cfg.task == Task::kOcl) {
    add_head_params(teacher, cfg.model, HeadKind::kTeacher, cfg.seed + 7);
  }
}

bool Trainer::trainable(const std::string& name) const {
  return !cfg.freeze_backbone || is_head(name);
}

namespace {

Tensor<float> flip_some(const Tensor<float>& pixels, std::uint64_t seed, long step) {
  const std::size_t B = pixels.dim(0), H = pixels.dim(1), W = pixels.dim(2), c = pixels.dim(3);
  Tensor<float> out = pixels;
  CounterRng rng(seed, static_cast<std::uint64_t>(step), "hflip");
  for (std::size_t b = 0; b < B; ++b) {
    if (rng.uniform() >= 0.5) continue;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        for (std::size_t k = 0; k < c; ++k)
          out[((b * H + y) * W + x) * c + k] = pixels[((b * H + y) * W + (W - 1 - x)) * c + k];
  }
  return out;
}

}  // namespace

StepLosses Trainer::step(const std::vector<const data::Scene*>& batch, ParamMap<float>* grads_out) {
  Tensor<float> pixels = data::stack_images(batch);
  const bool spatial_targets = cfg.task == Task::kDetect || cfg.task == Task::kSegment;
  if (cfg.hflip && !spatial_targets) pixels = flip_some(pixels, cfg.seed, opt.step);
  ad::Tape<float> tape;
  ParamBinding<float> p(tape, params, [this](const std::string& n) { return trainable(n); });
  StepLosses parts;
  const Var<float> loss = batch_loss(p, cfg, batch, pixels, &teacher, &parts);
  if (!std::isfinite(parts.total)) {
    throw NonFiniteError("non-finite loss " + std::to_string(parts.total));
  }
  tape.backward(loss);
  const ParamMap<float> grads = p.gradients();
  if (grads_out) *grads_out = grads;
  AdamWConfig oc = cfg.optim;
  oc.lr = cosine_lr(opt.step, warmup_steps, total_steps, cfg.optim.lr, cfg.min_lr);
  adamw_step(params, grads, opt, oc, [this](const std::string& name) {
    return default_decays(name, params.at(name).rank());
  });
  return parts;
}

void save_run(const std::string& stem, const ParamMap<float>& params, const RunConfig& cfg) {
  save_checkpoint(stem, params);
  data::write_file(stem + ".config", cfg.to_text());
}

RunConfig load_run_config(const std::string& checkpoint) {
  const std::string sidecar = checkpoint + ".config";
  if (!fs::exists(sidecar)) throw IoError("missing config sidecar " + sidecar);
  return RunConfig::from_file(sidecar);
}

TrainResult train(const RunConfig& cfg, const data::Dataset& ds,
                  std::optional<ParamMap<float>> init, const EpochHook& hook) {
  cfg.validate();
  if (ds.train.empty()) throw ConfigError("empty training split");
  Trainer tr(cfg, init ? std::move(*init) : init_params(cfg));
  const std::size_t n = ds.train.size();
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  tr.total_steps = static_cast<long>(per_epoch * cfg.epochs);
  if (cfg.max_steps) tr.total_steps = std::min<long>(tr.total_steps, static_cast<long>(cfg.max_steps));
  tr.warmup_steps = std::min<long>(static_cast<long>(per_epoch * cfg.warmup_epochs), tr.total_steps / 2);
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  TrainResult res;
  std::string last_good = "none";
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    CounterRng rng(cfg.seed, epoch, "shuffle");
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      if (tr.opt.step >= tr.total_steps) break;
      std::vector<const data::Scene*> batch;
      for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) {
        batch.push_back(&ds.train[order[i]]);
      }
      StepLosses l;
      try {
        l = tr.step(batch);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("training diverged at step " + std::to_string(tr.opt.step) +
                             " (epoch " + std::to_string(epoch) + "): " + e.what() +
                             "; last good checkpoint: " + last_good);
      }
      rec.loss += l.total;
      rec.loss_cls += l.cls;
      rec.loss_aux += l.aux;
      ++rec.steps;
    }
    if (rec.steps) {
      rec.loss /= static_cast<double>(rec.steps);
      rec.loss_cls /= static_cast<double>(rec.steps);
      rec.loss_aux /= static_cast<double>(rec.steps);
    }
    if (!ds.val.empty() && has_head(tr.params, HeadKind::kClassify)) {
      rec.val_accuracy = accuracy(tr.params, cfg.model, ds.val);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.append(rec);
    if (hook) hook(rec);
    const bool done = tr.opt.step >= tr.total_steps || epoch == cfg.epochs ||
                      (cfg.stop_at_accuracy > 0 && rec.val_accuracy >= cfg.stop_at_accuracy);
    if (!cfg.out_dir.empty()) {
      if (cfg.checkpoint_every && epoch % cfg.checkpoint_every == 0) {
        last_good = (fs::path(cfg.out_dir) / ("epoch" + std::to_string(epoch) + ".ckpt")).string();
        save_run(last_good, tr.params, cfg);
      }
      res.log.write((fs::path(cfg.out_dir) / "runlog.csv").string());
      if (done) save_run((fs::path(cfg.out_dir) / "final.ckpt").string(), tr.params, cfg);
    }
    if (done) break;
  }
  res.params = std::move(tr.params);
  return res;
}

}  // namespace wwt::train
