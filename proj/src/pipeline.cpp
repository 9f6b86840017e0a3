#include "carpet/pipeline.hpp"

#include <chrono>

#include "carpet/image_io.hpp"

namespace carpet {

using nlohmann::json;

namespace {

constexpr const char* kStage1 = "stage1";
constexpr const char* kStage2 = "stage2";
constexpr const char* kColorize = "colorize";

int swap_units(const ModelBundle& models) { return models.decoder->work_units(); }

int second_units(const PipelineConfig& cfg, const ModelBundle& models) {
  switch (cfg.second_method) {
    case SecondMethod::StyleSwap: return swap_units(models);
    case SecondMethod::Gatys: return std::max(1, cfg.gatys.iterations);
    case SecondMethod::ClipStyler: return std::max(1, cfg.clip.iterations);
  }
  return 1;
}

int coloring_units(const PipelineConfig& cfg) {
  switch (cfg.coloring_method) {
    case ColoringMethod::ClipStyler: return std::max(1, cfg.clip.iterations);
    case ColoringMethod::Cams: return std::max(1, cfg.cams.iterations);
    case ColoringMethod::Gatys: return std::max(1, cfg.gatys.iterations);
  }
  return 1;
}

/// Maps per-stage iteration events onto one monotone fraction for the chain.
class ProgressTracker {
 public:
  ProgressTracker(std::vector<std::pair<std::string, int>> plan, const PipelineHooks& hooks, int preview_every)
      : plan_(std::move(plan)), hooks_(hooks), preview_every_(preview_every) {
    for (const auto& [_, units] : plan_) total_ += units;
  }

  IterationObserver observer(const std::string& stage) {
    std::size_t index = 0;
    while (index < plan_.size() && plan_[index].first != stage) ++index;
    double offset = 0;
    for (std::size_t i = 0; i < index; ++i) offset += plan_[i].second;
    const double units = index < plan_.size() ? plan_[index].second : 0;
    return [this, stage, offset, units](const IterationEvent& ev) {
      const double within = ev.total > 0 ? units * std::min(1.0, (ev.iteration + 1.0) / ev.total) : 0.0;
      report(stage, ev, (offset + within) / std::max(1.0, total_));
    };
  }

  void stage_done(const std::string& stage) {
    double done = 0;
    for (const auto& [name, units] : plan_) {
      done += units;
      if (name == stage) break;
    }
    IterationEvent ev{stage, 0, 0, 0.0, nullptr};
    report(stage, ev, done / std::max(1.0, total_));
  }

 private:
  void report(const std::string& stage, const IterationEvent& ev, double fraction) {
    fraction_ = std::max(fraction_, std::min(1.0, fraction));
    if (!hooks_.progress) return;
    PipelineProgress p;
    p.stage = stage;
    p.iteration = ev.iteration;
    p.total = ev.total;
    p.loss = ev.loss;
    p.fraction = fraction_;
    p.preview_due = preview_every_ > 0 && ev.snapshot && ev.total > 0 &&
                    (ev.iteration % preview_every_ == 0 || ev.iteration == ev.total - 1);
    p.snapshot = ev.snapshot;
    hooks_.progress(p);
  }

  std::vector<std::pair<std::string, int>> plan_;
  const PipelineHooks& hooks_;
  int preview_every_;
  double total_ = 0;
  double fraction_ = 0;
};

/// Runs `fn` as stage `stage`, converting failures into StageFailure.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const StageFailure&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Cancelled) throw;
    throw StageFailure(stage, e.code(), e.what());
  } catch (const std::exception& e) {
    throw StageFailure(stage, ErrorCode::StageFailure, e.what());
  }
}

struct Inputs {
  ImageTensor content;
  const ImageResolver& resolve;

  ImageTensor style(const std::string& ref) const {
    return resize(resolve(ref), content.height(), content.width());
  }
};

ImageTensor load_content(const PipelineConfig& cfg, const ImageResolver& resolve) {
  auto img = resolve(cfg.content);
  if (cfg.resolution) img = resize(img, cfg.resolution->first, cfg.resolution->second);
  return img;
}

void require_valid(const PipelineConfig& cfg) {
  auto errors = validate_pipeline_config(cfg);
  if (!errors.empty()) throw ValidationError(std::move(errors));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct StageOutput {
  ImageTensor image;
  StageRecord record;
  std::optional<WeightMaskSet<float>> masks;
};

StageOutput swap_stage(const std::string& name, const ImageTensor& content, const ImageTensor& style,
                       const PipelineConfig& cfg, const ModelBundle& models, ProgressTracker& tracker) {
  const auto start = std::chrono::steady_clock::now();
  const auto obs = tracker.observer(name);
  auto res = run_stage(name, [&] { return run_style_swap(content, style, cfg.swap, *models.encoder, *models.decoder, &obs); });
  tracker.stage_done(name);
  return {std::move(res.image), {name, "StyleSwap", seconds_since(start), {}}, std::nullopt};
}

StageOutput second_stage(const ImageTensor& o1, const Inputs& in, const PipelineConfig& cfg, const ModelBundle& models,
                         ProgressTracker& tracker) {
  if (cfg.second_method == SecondMethod::StyleSwap) {
    const auto style = run_stage(kStage2, [&] { return in.style(cfg.style2.asset); });
    return swap_stage(kStage2, o1, style, cfg, models, tracker);
  }
  const auto start = std::chrono::steady_clock::now();
  const auto obs = tracker.observer(kStage2);
  StageOutput out;
  TransferResult<float> res;
  if (cfg.second_method == SecondMethod::Gatys) {
    res = run_stage(kStage2, [&] {
      GatysConfig g = cfg.gatys;
      g.seed = cfg.seed;
      return run_gatys(o1, in.style(cfg.style2.asset), g, *models.encoder, &obs);
    });
  } else {
    res = run_stage(kStage2, [&] {
      ClipStylerConfig c = cfg.clip;
      c.seed = cfg.seed;
      return run_clip_styler(o1, *cfg.style2.text, c, *models.encoder, *models.embedder, &obs);
    });
  }
  tracker.stage_done(kStage2);
  out.image = std::move(res.image);
  out.record = {kStage2, std::string(to_string(cfg.second_method)), seconds_since(start), std::move(res.loss_trace)};
  return out;
}

StageOutput coloring_stage(const ImageTensor& gray, const PipelineConfig& cfg, const ModelBundle& models,
                           const ImageResolver& resolve, ProgressTracker& tracker) {
  const auto start = std::chrono::steady_clock::now();
  const auto obs = tracker.observer(kColorize);
  const Inputs in{gray, resolve};
  StageOutput out;
  TransferResult<float> res;
  switch (cfg.coloring_method) {
    case ColoringMethod::Gatys:
      res = run_stage(kColorize, [&] {
        GatysConfig g = cfg.gatys;
        g.seed = cfg.seed + 1;
        return run_gatys(gray, in.style(cfg.color_source.asset), g, *models.encoder, &obs);
      });
      break;
    case ColoringMethod::Cams: {
      auto cams = run_stage(kColorize, [&] {
        CamsConfig c = cfg.cams;
        c.seed = cfg.seed + 1;
        return run_cams(gray, in.style(cfg.color_source.asset), c, *models.encoder, &obs);
      });
      out.masks = std::move(cams.output_masks);
      res = std::move(cams);
      break;
    }
    case ColoringMethod::ClipStyler:
      res = run_stage(kColorize, [&] {
        ClipStylerConfig c = cfg.clip;
        c.seed = cfg.seed + 1;
        return run_clip_styler(gray, *cfg.color_source.text, c, *models.encoder, *models.embedder, &obs);
      });
      break;
  }
  tracker.stage_done(kColorize);
  out.image = std::move(res.image);
  out.record = {kColorize, std::string(to_string(cfg.coloring_method)), seconds_since(start), std::move(res.loss_trace)};
  return out;
}

struct GenerateOutput {
  ImageTensor o1;
  ImageTensor o2;
  std::vector<StageRecord> stages;
};

GenerateOutput generate_impl(const PipelineConfig& cfg, const ModelBundle& models, const ImageResolver& resolve,
                             const PipelineHooks& hooks, ProgressTracker& tracker) {
  const Inputs in{run_stage(kStage1, [&] { return load_content(cfg, resolve); }), resolve};
  const auto style1 = run_stage(kStage1, [&] { return in.style(cfg.style1); });
  GenerateOutput out;
  auto s1 = swap_stage(kStage1, in.content, style1, cfg, models, tracker);
  out.o1 = std::move(s1.image);
  out.stages.push_back(std::move(s1.record));
  if (hooks.artifact) hooks.artifact("I_o1", out.o1);
  auto s2 = second_stage(out.o1, in, cfg, models, tracker);
  out.o2 = to_grayscale(s2.image);
  out.stages.push_back(std::move(s2.record));
  if (hooks.artifact) hooks.artifact("I_o2", out.o2);
  return out;
}

}  // namespace

ImageResolver file_resolver(const std::filesystem::path& base) {
  return [base](const std::string& ref) {
    const std::filesystem::path p(ref);
    return load_image(p.is_absolute() || base.empty() ? p : base / p);
  };
}

std::vector<std::pair<std::string, int>> plan_work(const PipelineConfig& cfg, const ModelBundle& models) {
  return {{kStage1, swap_units(models)}, {kStage2, second_units(cfg, models)}, {kColorize, coloring_units(cfg)}};
}

std::pair<ImageTensor, ImageTensor> generate(const PipelineConfig& cfg, const ModelBundle& models,
                                             const ImageResolver& resolve, const PipelineHooks& hooks) {
  require_valid(cfg);
  auto plan = plan_work(cfg, models);
  plan.pop_back();
  ProgressTracker tracker(std::move(plan), hooks, cfg.preview_every);
  auto out = generate_impl(cfg, models, resolve, hooks, tracker);
  return {std::move(out.o1), std::move(out.o2)};
}

ImageTensor colorize(const ImageTensor& grayscale, const PipelineConfig& cfg, const ModelBundle& models,
                     const ImageResolver& resolve, const PipelineHooks& hooks) {
  require_valid(cfg);
  if (!is_grayscale(grayscale)) throw Error(ErrorCode::InvalidImage, "colorization input must be grayscale");
  ProgressTracker tracker({{kColorize, coloring_units(cfg)}}, hooks, cfg.preview_every);
  auto out = coloring_stage(grayscale, cfg, models, resolve, tracker);
  if (hooks.artifact) hooks.artifact("I_final", out.image);
  return std::move(out.image);
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const ModelBundle& models, const ImageResolver& resolve,
                            const PipelineHooks& hooks) {
  require_valid(cfg);
  ProgressTracker tracker(plan_work(cfg, models), hooks, cfg.preview_every);
  PipelineResult result;
  result.config_snapshot = to_json(cfg);
  auto gen = generate_impl(cfg, models, resolve, hooks, tracker);
  result.o1 = std::move(gen.o1);
  result.o2 = std::move(gen.o2);
  result.stages = std::move(gen.stages);
  auto colored = coloring_stage(result.o2, cfg, models, resolve, tracker);
  result.final_image = std::move(colored.image);
  result.color_masks = std::move(colored.masks);
  result.stages.push_back(std::move(colored.record));
  if (hooks.artifact) hooks.artifact("I_final", result.final_image);
  return result;
}

json PipelineResult::report() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"name", s.name}, {"method", s.method}, {"seconds", s.seconds}, {"lossTrace", s.loss_trace}});
  }
  json doc = {{"config", config_snapshot}, {"stages", stages_json}};
  if (color_masks) {
    json palette = json::array();
    for (const auto& c : color_masks->palette.colors) palette.push_back({c.x(), c.y(), c.z()});
    doc["palette"] = palette;
  }
  return doc;
}

std::vector<std::pair<std::string, ImageTensor>> mask_images(const WeightMaskSet<float>& masks) {
  std::vector<std::pair<std::string, ImageTensor>> out;
  const int n = masks.count();
  constexpr int kSwatch = 32;
  Tensor3<float> strip(3, kSwatch, kSwatch * std::max(1, n));
  for (int t = 0; t < n; ++t) {
    const auto& c = masks.palette.colors[static_cast<std::size_t>(t)];
    for (int y = 0; y < kSwatch; ++y) {
      for (int x = 0; x < kSwatch; ++x) {
        for (int ch = 0; ch < 3; ++ch) strip.at(ch, y, t * kSwatch + x) = static_cast<float>(c[ch]);
      }
    }
  }
  out.emplace_back("palette", ImageTensor::clamped(std::move(strip)));
  for (int t = 0; t < n; ++t) {
    Tensor3<float> m(3, masks.height(), masks.width());
    for (int ch = 0; ch < 3; ++ch) m.data.row(ch) = masks.masks.data.row(t);
    out.emplace_back("mask_" + std::to_string(t), ImageTensor::clamped(std::move(m)));
  }
  return out;
}

void write_artifacts(const PipelineResult& result, const std::filesystem::path& dir, bool dump_masks) {
  save_png(result.o1, dir / "I_o1.png");
  save_png(result.o2, dir / "I_o2.png");
  save_png(result.final_image, dir / "I_final.png");
  const auto report = result.report().dump(2);
  write_file_atomic(dir / "report.json", std::span(reinterpret_cast<const std::uint8_t*>(report.data()), report.size()));
  const auto config = result.config_snapshot.dump(2);
  write_file_atomic(dir / "config.json", std::span(reinterpret_cast<const std::uint8_t*>(config.data()), config.size()));
  if (dump_masks && result.color_masks) {
    for (const auto& [name, img] : mask_images(*result.color_masks)) save_png(img, dir / (name + ".png"));
  }
}

}  // namespace carpet
