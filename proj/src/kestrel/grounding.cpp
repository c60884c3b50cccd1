#include "kestrel/grounding.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "kestrel/error.hpp"

namespace kestrel {

std::vector<GroundedInstance> filter_instances(const SegmentResponse& response, double threshold) {
  std::vector<GroundedInstance> out;
  for (const auto& s : response.instances) {
    if (s.score < threshold) continue;
    out.push_back({s.score, mask_to_bbox(s.mask), s.mask});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

GroundingResult ground_from_response(const SegmentResponse& response, std::string target, ClaimType ctype,
                                     const GateConfig& gates, int max_instances) {
  GroundingResult r;
  r.tkey = TargetKey::from_phrase(target);
  r.target = std::move(target);
  for (const auto& s : response.instances) r.raw_scores.push_back(s.score);
  r.saturated = static_cast<int>(response.instances.size()) >= max_instances;
  r.threshold_used = gates.ground_conf;
  r.instances = filter_instances(response, gates.ground_conf);
  if (r.instances.empty() && ctype == ClaimType::Existence) {
    r.rechecked = true;
    r.threshold_used = gates.ground_recheck_conf;
    r.instances = filter_instances(response, gates.ground_recheck_conf);
  }
  return r;
}

GroundingSummary summarize(const GroundingResult& result) {
  GroundingSummary s;
  s.target = result.target;
  s.tkey = result.tkey.str();
  for (const auto& inst : result.instances) {
    s.scores.push_back(inst.score);
    s.boxes.push_back({inst.bbox.x0, inst.bbox.y0, inst.bbox.x1, inst.bbox.y1});
  }
  s.threshold_used = result.threshold_used;
  s.rechecked = result.rechecked;
  s.cached = result.cached;
  s.raw_scores = result.raw_scores;
  return s;
}

Grounder::Grounder(std::shared_ptr<SegmentationBackend> backend, GateConfig gates, GroundingOptions options)
    : backend_(std::move(backend)), gates_(std::move(gates)), options_(options) {}

double Grounder::request_min_score() const { return std::min(gates_.ground_conf, gates_.ground_recheck_conf); }

GroundingResult Grounder::ground(const ImageData& image, const std::string& image_path, const std::string& target,
                                 ClaimType ctype) {
  if (!backend_) throw Error(ErrorCode::BackendUnavailable, "no segmentation backend bound");
  const auto tkey = TargetKey::from_phrase(target);
  const auto key = std::make_tuple(image.hash, tkey.str(), request_min_score());
  bool cached = true;
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    SegmentRequest req;
    req.image = image;
    req.image_path = image_path;
    req.concept_text = target;
    req.max_instances = options_.max_instances;
    req.min_score = request_min_score();
    it = cache_.emplace(key, backend_->segment(req)).first;
    cached = false;
  }
  auto result = ground_from_response(it->second, target, ctype, gates_, options_.max_instances);
  result.cached = cached;
  return result;
}

std::string_view to_string(ArtifactKind k) noexcept {
  switch (k) {
    case ArtifactKind::SegOverlay: return "seg_overlay";
    case ArtifactKind::BboxRender: return "bbox_render";
    case ArtifactKind::CropZoom: return "crop_zoom";
    case ArtifactKind::Context: return "context";
  }
  return "context";
}

Rgb instance_color(int index) {
  // Golden-angle hue steps keep neighbouring indices far apart.
  cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(static_cast<int>(std::fmod(index * 137.508, 360.0) / 2.0), 230, 240));
  cv::Mat rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  const auto px = rgb.at<cv::Vec3b>(0, 0);
  return {px[0], px[1], px[2]};
}

BBox crop_region(const BBox& box, double margin, int image_width, int image_height) {
  const int mx = static_cast<int>(std::lround(box.width() * margin));
  const int my = static_cast<int>(std::lround(box.height() * margin));
  BBox r{std::max(0, box.x0 - mx), std::max(0, box.y0 - my), std::min(image_width, box.x1 + mx),
         std::min(image_height, box.y1 + my)};
  return r;
}

Image crop_zoom(const Image& image, const BBox& box, double margin, int min_side) {
  const auto r = crop_region(box, margin, image.width(), image.height());
  if (!r.valid()) throw Error(ErrorCode::InvalidArgument, "crop region is empty");
  auto c = crop(image, r.x0, r.y0, r.x1, r.y1);
  const int shorter = std::min(c.width(), c.height());
  if (shorter >= min_side) return c;
  const double scale = static_cast<double>(min_side) / shorter;
  const int w = std::max(min_side, static_cast<int>(std::ceil(c.width() * scale - 1e-9)));
  const int h = std::max(min_side, static_cast<int>(std::ceil(c.height() * scale - 1e-9)));
  return resize(c, w, h);
}

namespace {

cv::Mat view(Image& img) { return cv::Mat(img.height(), img.width(), CV_8UC3, img.bytes().data()); }

}  // namespace

Image render_overlay(const Image& base, const GroundingResult& result) {
  Image out = base;
  constexpr double alpha = 0.45;
  for (std::size_t i = 0; i < result.instances.size(); ++i) {
    const auto& inst = result.instances[i];
    const auto color = instance_color(static_cast<int>(i));
    for (int y = inst.bbox.y0; y < inst.bbox.y1; ++y) {
      for (int x = inst.bbox.x0; x < inst.bbox.x1; ++x) {
        if (!inst.mask.at(x, y)) continue;
        const auto p = out.at(x, y);
        auto mix = [&](std::uint8_t a, std::uint8_t b) {
          return static_cast<std::uint8_t>(std::lround(a * (1 - alpha) + b * alpha));
        };
        out.set(x, y, {mix(p.r, color.r), mix(p.g, color.g), mix(p.b, color.b)});
      }
    }
  }
  return out;
}

Image render_boxes(const Image& base, const GroundingResult& result) {
  Image out = base;
  auto m = view(out);
  const int thickness = std::max(1, std::min(out.width(), out.height()) / 160);
  for (std::size_t i = 0; i < result.instances.size(); ++i) {
    const auto& b = result.instances[i].bbox;
    const auto c = instance_color(static_cast<int>(i));
    const cv::Scalar color(c.r, c.g, c.b);
    cv::rectangle(m, cv::Point(b.x0, b.y0), cv::Point(b.x1 - 1, b.y1 - 1), color, thickness);
    cv::putText(m, std::to_string(i + 1), cv::Point(b.x0 + 2, std::max(10, b.y0 + 12)), cv::FONT_HERSHEY_SIMPLEX,
                0.4, color, 1);
  }
  return out;
}

std::vector<VisualArtifact> render_artifacts(const ImageData& image, const GroundingResult& result,
                                             const GroundingOptions& options) {
  if (!image) throw Error(ErrorCode::ImageDecodeError, "no image to render artifacts on");
  const auto& base = *image.image;
  std::vector<VisualArtifact> out;
  const auto tkey = result.tkey.str();
  if (result.instances.empty()) {
    out.push_back({ArtifactKind::Context, image, tkey, std::nullopt, {}});
    return out;
  }
  out.push_back({ArtifactKind::SegOverlay, ImageData::of(render_overlay(base, result)), tkey, std::nullopt, {}});
  out.push_back({ArtifactKind::BboxRender, ImageData::of(render_boxes(base, result)), tkey, std::nullopt, {}});
  for (std::size_t i = 0; i < result.instances.size(); ++i) {
    const auto& b = result.instances[i].bbox;
    out.push_back({ArtifactKind::CropZoom,
                   ImageData::of(crop_zoom(base, b, options.crop_margin, options.crop_min_side)), tkey,
                   static_cast<int>(i), crop_region(b, options.crop_margin, base.width(), base.height())});
  }
  return out;
}

}  // namespace kestrel
