#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "kestrel/backends.hpp"
#include "kestrel/config.hpp"
#include "kestrel/records.hpp"

namespace kestrel {

struct GroundedInstance {
  double score = 0.0;
  BBox bbox;  // derived from the mask
  Mask mask;
};

struct GroundingResult {
  std::string target;  // raw phrase used as the concept prompt
  TargetKey tkey = TargetKey::from_phrase("object");
  std::vector<GroundedInstance> instances;  // score-descending
  double threshold_used = 0.0;
  bool rechecked = false;
  bool cached = false;
  /// Backend returned max_instances instances, so the true count may be higher.
  bool saturated = false;
  std::vector<double> raw_scores;
};

/// Instances with score >= threshold, sorted by descending score (stable for
/// ties), with boxes recomputed from the masks.
std::vector<GroundedInstance> filter_instances(const SegmentResponse& response, double threshold);

/// Applies the confidence filter, and the existence recheck at the lower
/// threshold when the strict result is empty. Never re-queries.
GroundingResult ground_from_response(const SegmentResponse& response, std::string target, ClaimType ctype,
                                     const GateConfig& gates, int max_instances);

GroundingSummary summarize(const GroundingResult& result);

/// Per-sample grounding client. Raw responses are cached by
/// (image hash, target key, min_score).
class Grounder {
 public:
  Grounder(std::shared_ptr<SegmentationBackend> backend, GateConfig gates, GroundingOptions options);

  /// Throws whatever the backend throws (BackendUnavailable, MalformedResponse).
  GroundingResult ground(const ImageData& image, const std::string& image_path, const std::string& target,
                         ClaimType ctype);

  /// Score floor sent with every request: the lower of the two thresholds.
  double request_min_score() const;

 private:
  std::shared_ptr<SegmentationBackend> backend_;
  GateConfig gates_;
  GroundingOptions options_;
  std::map<std::tuple<std::string, std::string, double>, SegmentResponse> cache_;
};

enum class ArtifactKind { SegOverlay, BboxRender, CropZoom, Context };

std::string_view to_string(ArtifactKind k) noexcept;

struct VisualArtifact {
  ArtifactKind kind = ArtifactKind::Context;
  ImageData image;
  std::string source_target;  // TargetKey string
  std::optional<int> instance_index;
  BBox region;  // crop region in source pixels (crop_zoom only)
};

/// Overlay, box rendering and one crop per instance; an empty result yields
/// only the unannotated context image.
std::vector<VisualArtifact> render_artifacts(const ImageData& image, const GroundingResult& result,
                                             const GroundingOptions& options);

/// Semi-transparent per-instance fill over the masks.
Image render_overlay(const Image& base, const GroundingResult& result);
/// Numbered instance boxes.
Image render_boxes(const Image& base, const GroundingResult& result);

/// Crop region for one box: expanded by `margin` of its size on every side and
/// clamped to the image.
BBox crop_region(const BBox& box, double margin, int image_width, int image_height);

/// Crop upscaled so the shorter side is at least `min_side`.
Image crop_zoom(const Image& image, const BBox& box, double margin, int min_side);

/// Distinct per-instance color.
Rgb instance_color(int index);

}  // namespace kestrel
