#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "carpet/cams.hpp"
#include "carpet/clip_styler.hpp"
#include "carpet/gatys.hpp"
#include "carpet/models.hpp"
#include "carpet/style_swap.hpp"
#include "json.hpp"

namespace carpet {

enum class SecondMethod { StyleSwap, Gatys, ClipStyler };
enum class ColoringMethod { ClipStyler, Cams, Gatys };

std::string_view to_string(SecondMethod m);
std::string_view to_string(ColoringMethod m);

/// Either an image reference (file path or asset id, depending on the
/// resolver) or a text prompt.
struct StyleSource {
  std::string asset;
  std::optional<StyleText> text;

  bool is_text() const { return text.has_value(); }
  static StyleSource image(std::string ref) { return {std::move(ref), std::nullopt}; }
  static StyleSource prompt(std::string style, std::string content = "Photo") {
    return {{}, StyleText{std::move(style), std::move(content)}};
  }
};

struct PipelineConfig {
  std::string content;
  std::string style1;
  StyleSource style2;
  StyleSource color_source;
  SecondMethod second_method = SecondMethod::Gatys;
  ColoringMethod coloring_method = ColoringMethod::Cams;
  SwapConfig swap;
  GatysConfig gatys;
  CamsConfig cams;
  ClipStylerConfig clip;
  /// Working size (height, width); unset keeps the content image size.
  std::optional<std::pair<int, int>> resolution;
  std::uint64_t seed = 0;
  /// Emit a preview frame every N iterations of each stage (0: none).
  int preview_every = 0;

  /// Every image reference in the config (content, style1, and image sources).
  std::vector<std::string> asset_refs() const;
};

struct FieldError {
  std::string field;
  std::string message;
};

/// Config rejected before any compute; carries one message per bad field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<FieldError> fields);
  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  std::vector<FieldError> fields_;
};

/// Parses the job JSON document. Throws ValidationError listing every bad field.
PipelineConfig parse_pipeline_config(const nlohmann::json& doc);
nlohmann::json to_json(const PipelineConfig& cfg);
/// Field errors of an in-memory config (empty when valid).
std::vector<FieldError> validate_pipeline_config(const PipelineConfig& cfg);
/// Defaults a fresh install presents (method configs, methods, seed).
nlohmann::json pipeline_defaults();

/// A stage failure tagged with the stage it happened in.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, ErrorCode cause, const std::string& message);
  const std::string& stage() const { return stage_; }
  ErrorCode cause() const { return cause_; }

 private:
  std::string stage_;
  ErrorCode cause_;
};

struct PipelineProgress {
  std::string stage;
  int iteration = 0;
  int total = 0;
  double loss = 0.0;
  double fraction = 0.0;  // over the whole chain, monotone
  bool preview_due = false;
  std::function<ImageTensor()> snapshot;
};

struct StageRecord {
  std::string name;    // "stage1", "stage2", "colorize"
  std::string method;  // "StyleSwap", "Gatys", ...
  double seconds = 0.0;
  std::vector<double> loss_trace;
};

struct PipelineHooks {
  /// May throw Error{Cancelled} to abort.
  std::function<void(const PipelineProgress&)> progress;
  /// Called as soon as each artifact ("I_o1", "I_o2", "I_final") exists.
  std::function<void(const std::string&, const ImageTensor&)> artifact;
};

struct PipelineResult {
  ImageTensor o1;
  ImageTensor o2;
  ImageTensor final_image;
  std::vector<StageRecord> stages;
  nlohmann::json config_snapshot;
  /// Colorization palette and full-resolution masks (Cams only).
  std::optional<WeightMaskSet<float>> color_masks;

  nlohmann::json report() const;
};

using ImageResolver = std::function<ImageTensor(const std::string&)>;

/// Loads each reference as an image file path.
ImageResolver file_resolver(const std::filesystem::path& base = {});

/// Iteration counts per stage, used for progress weighting.
std::vector<std::pair<std::string, int>> plan_work(const PipelineConfig& cfg, const ModelBundle& models);

/// Stage 1 Style-Swap then the second method; returns (I_o1, I_o2) with I_o2
/// in grayscale.
std::pair<ImageTensor, ImageTensor> generate(const PipelineConfig& cfg, const ModelBundle& models,
                                             const ImageResolver& resolve, const PipelineHooks& hooks = {});

ImageTensor colorize(const ImageTensor& grayscale, const PipelineConfig& cfg, const ModelBundle& models,
                     const ImageResolver& resolve, const PipelineHooks& hooks = {});

PipelineResult run_pipeline(const PipelineConfig& cfg, const ModelBundle& models, const ImageResolver& resolve,
                            const PipelineHooks& hooks = {});

/// Writes I_o1.png, I_o2.png, I_final.png, report.json and optionally the
/// palette and mask images.
void write_artifacts(const PipelineResult& result, const std::filesystem::path& dir, bool dump_masks);

/// Palette swatch strip and one grayscale image per mask.
std::vector<std::pair<std::string, ImageTensor>> mask_images(const WeightMaskSet<float>& masks);

}  // namespace carpet
