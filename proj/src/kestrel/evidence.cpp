#include "kestrel/evidence.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include <opencv2/imgproc.hpp>

#include "kestrel/error.hpp"

namespace kestrel {

namespace {

std::string prefix_of(EvidenceType t) {
  switch (t) {
    case EvidenceType::SegOverlay: return "e_seg_";
    case EvidenceType::CropZoom: return "e_crop_";
    case EvidenceType::CountText: return "e_count_";
    case EvidenceType::CountCompareText: return "e_countcmp_";
    case EvidenceType::CountVisionText: return "e_countvis_";
    case EvidenceType::CountVisionCompareText: return "e_countviscmp_";
    case EvidenceType::ColorText: return "e_color_";
    case EvidenceType::PositionText: return "e_pos_";
    case EvidenceType::PositionRelationText: return "e_posrel_";
    case EvidenceType::ExistenceText: return "e_exist_";
  }
  return "e_";
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

bool same_content(const EvidenceItem& a, const EvidenceItem& b) {
  return a.etype == b.etype && a.text == b.text && a.image_hash == b.image_hash && a.target == b.target &&
         a.claim_id == b.claim_id;
}

std::string count_phrase(std::size_t n, bool saturated, int max_instances) {
  if (saturated) return "at least " + std::to_string(max_instances);
  return std::to_string(n);
}

}  // namespace

std::string make_evidence_id(EvidenceType etype, std::string_view scope) {
  if (trim(scope).empty()) {
    throw Error(ErrorCode::MissingScope, std::string(to_string(etype)) + " evidence needs " +
                                             (etype == EvidenceType::PositionRelationText ? "a claim id" : "a target"));
  }
  return prefix_of(etype) + std::string(scope);
}

std::string EvidenceRegistry::add(EvidenceItem item, int round) {
  if (item.image) item.image_hash = item.image.hash;
  const std::string base = item.id;
  auto mark_used = [&](const std::string& id) {
    auto& used = used_[round];
    if (std::find(used.begin(), used.end(), id) == used.end()) used.push_back(id);
    return id;
  };
  // Identical content stored under any suffix of this base keeps its id.
  for (const auto& existing : items_) {
    const auto& eid = existing.id;
    if ((eid == base || eid.rfind(base + "_r", 0) == 0) && same_content(existing, item)) return mark_used(eid);
  }
  std::string id = base;
  for (int n = 1;; ++n) {
    auto it = index_.find(id);
    if (it == index_.end()) break;
    if (same_content(items_[it->second], item)) return mark_used(id);
    id = base + "_r" + std::to_string(round) + (n == 1 ? "" : "_" + std::to_string(n));
  }
  item.id = id;
  item.round = round;
  index_.emplace(id, items_.size());
  items_.push_back(std::move(item));
  fresh_[round].push_back(id);
  return mark_used(id);
}

const EvidenceItem* EvidenceRegistry::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::vector<std::string> EvidenceRegistry::round_ids(int round) const {
  auto it = used_.find(round);
  return it == used_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<EvidenceItem> EvidenceRegistry::round_items(int round) const {
  std::vector<EvidenceItem> out;
  for (const auto& id : round_ids(round)) out.push_back(*find(id));
  return out;
}

std::vector<std::string> EvidenceRegistry::new_ids(int round) const {
  auto it = fresh_.find(round);
  return it == fresh_.end() ? std::vector<std::string>{} : it->second;
}

EvidenceItem derive_existence(const GroundingResult& result) {
  EvidenceItem e;
  e.etype = EvidenceType::ExistenceText;
  e.target = result.tkey.str();
  e.id = make_evidence_id(e.etype, e.target);
  const auto n = result.instances.size();
  if (n > 0) {
    e.text = std::to_string(n) + " instance(s) of '" + result.target + "' found (max score " +
             fixed2(result.instances.front().score) + ").";
    if (result.rechecked) {
      e.text += " Low-confidence detection: kept only at the recheck threshold " + fixed2(result.threshold_used) + ".";
    }
  } else if (result.rechecked) {
    e.text = "no instance of '" + result.target + "' detected, even at the recheck threshold " +
             fixed2(result.threshold_used) + ".";
  } else {
    e.text = "no instance of '" + result.target + "' detected at threshold " + fixed2(result.threshold_used) + ".";
  }
  return e;
}

std::vector<EvidenceItem> derive_count(const GroundingResult& result, std::optional<int> claimed, int max_instances) {
  std::vector<EvidenceItem> out;
  const auto tkey = result.tkey.str();
  const auto n = result.instances.size();
  EvidenceItem count;
  count.etype = EvidenceType::CountText;
  count.target = tkey;
  count.id = make_evidence_id(count.etype, tkey);
  count.text = "segmentation count of '" + result.target + "': " + count_phrase(n, result.saturated, max_instances) +
               " instance(s) at threshold " + fixed2(result.threshold_used) + ".";
  out.push_back(std::move(count));
  if (claimed) {
    EvidenceItem cmp;
    cmp.etype = EvidenceType::CountCompareText;
    cmp.target = tkey;
    cmp.id = make_evidence_id(cmp.etype, tkey);
    bool agrees = result.saturated ? *claimed >= max_instances : static_cast<int>(n) == *claimed;
    cmp.text = "segmentation count " + count_phrase(n, result.saturated, max_instances) +
               (agrees ? " agrees with" : " disagrees with") + " claimed " + std::to_string(*claimed) + ".";
    out.push_back(std::move(cmp));
  }
  return out;
}

std::vector<EvidenceItem> derive_count_vision(const GroundingResult& result, int observed, std::optional<int> claimed) {
  std::vector<EvidenceItem> out;
  const auto tkey = result.tkey.str();
  EvidenceItem count;
  count.etype = EvidenceType::CountVisionText;
  count.target = tkey;
  count.id = make_evidence_id(count.etype, tkey);
  count.text = "visual count of '" + result.target + "' over the numbered boxes: " + std::to_string(observed) + ".";
  out.push_back(std::move(count));
  if (claimed) {
    EvidenceItem cmp;
    cmp.etype = EvidenceType::CountVisionCompareText;
    cmp.target = tkey;
    cmp.id = make_evidence_id(cmp.etype, tkey);
    cmp.text = "visual count " + std::to_string(observed) + (observed == *claimed ? " agrees with" : " disagrees with") +
               " claimed " + std::to_string(*claimed) + ".";
    out.push_back(std::move(cmp));
  }
  return out;
}

EvidenceItem derive_color(const GroundingResult& result, std::string_view color, std::string_view observation) {
  if (result.instances.empty()) {
    throw Error(ErrorCode::NoInstances, "no instance of '" + result.target + "' to observe a color on");
  }
  EvidenceItem e;
  e.etype = EvidenceType::ColorText;
  e.target = result.tkey.str();
  e.id = make_evidence_id(e.etype, e.target);
  e.text = "observed color: " + std::string(color) + " (observer: \"" + trim(observation) + "\")";
  return e;
}

std::string hue_bucket(Rgb color) {
  cv::Mat rgb(1, 1, CV_32FC3, cv::Scalar(color.r / 255.0f, color.g / 255.0f, color.b / 255.0f));
  cv::Mat hsv;
  cv::cvtColor(rgb, hsv, cv::COLOR_RGB2HSV);
  const auto px = hsv.at<cv::Vec3f>(0, 0);
  const double h = px[0];  // degrees
  const double s = px[1];
  const double v = px[2];
  if (v < 0.2) return "black";
  if (s < 0.15) return v > 0.85 ? "white" : "gray";
  if ((h >= 290 || h < 15) && s < 0.6 && v > 0.7) return "pink";
  if (h < 15 || h >= 345) return "red";
  if (h < 45) return v < 0.65 ? "brown" : "orange";
  if (h < 70) return "yellow";
  if (h < 170) return "green";
  if (h < 260) return "blue";
  return "purple";
}

EvidenceItem derive_color_fallback(const Image& image, const GroundingResult& result) {
  if (result.instances.empty()) {
    throw Error(ErrorCode::NoInstances, "no instance of '" + result.target + "' to measure a color on");
  }
  const auto& top = result.instances.front();
  double r = 0, g = 0, b = 0;
  long long n = 0;
  for (int y = top.bbox.y0; y < top.bbox.y1; ++y) {
    for (int x = top.bbox.x0; x < top.bbox.x1; ++x) {
      if (!top.mask.at(x, y)) continue;
      const auto p = image.at(x, y);
      r += p.r;
      g += p.g;
      b += p.b;
      ++n;
    }
  }
  const Rgb mean{static_cast<std::uint8_t>(r / n + 0.5), static_cast<std::uint8_t>(g / n + 0.5),
                 static_cast<std::uint8_t>(b / n + 0.5)};
  EvidenceItem e;
  e.etype = EvidenceType::ColorText;
  e.target = result.tkey.str();
  e.id = make_evidence_id(e.etype, e.target);
  e.text = "low-fidelity observed color: " + hue_bucket(mean) + " (mean masked-pixel color, no observer reply)";
  return e;
}

std::vector<EvidenceItem> derive_position(int image_width, int image_height, std::span<const GroundingResult> results,
                                          const Claim& claim) {
  if (claim.type != ClaimType::Position) throw Error(ErrorCode::InvalidArgument, "position evidence needs a position claim");
  std::vector<EvidenceItem> out;
  for (const auto& r : results) {
    if (r.instances.empty()) continue;
    std::vector<BBox> boxes;
    for (const auto& inst : r.instances) boxes.push_back(inst.bbox);
    const auto u = union_box(boxes);
    EvidenceItem e;
    e.etype = EvidenceType::PositionText;
    e.target = r.tkey.str();
    e.id = make_evidence_id(e.etype, e.target);
    e.text = "'" + r.target + "' union box [" + std::to_string(u.x0) + "," + std::to_string(u.y0) + "," +
             std::to_string(u.x1) + "," + std::to_string(u.y1) + "] lies in the " +
             grid_cell(center2(u), image_width, image_height) + " cell.";
    out.push_back(std::move(e));
  }
  if (results.size() == 2) {
    EvidenceItem rel;
    rel.etype = EvidenceType::PositionRelationText;
    rel.claim_id = claim.id;
    rel.id = make_evidence_id(rel.etype, claim.id);
    const auto& a = results[0];
    const auto& b = results[1];
    if (a.instances.empty() || b.instances.empty()) {
      rel.text = "relation undeterminable: '" + (a.instances.empty() ? a.target : b.target) + "' not found";
    } else {
      const auto ca = center2(a.instances.front().bbox);
      const auto cb = center2(b.instances.front().bbox);
      const auto relation = relate(ca, cb);
      auto fmt = [](const Center2& c) {
        auto half = [](long long v2) { return std::to_string(v2 / 2) + (v2 % 2 ? ".5" : ""); };
        return "(" + half(c.x2) + "," + half(c.y2) + ")";
      };
      if (relation == Relation::Coincident) {
        rel.text = "'" + a.target + "' and '" + b.target + "' are coincident; relation ambiguous.";
      } else {
        rel.text = "'" + a.target + "' is " + std::string(to_phrase(relation)) + " '" + b.target +
                   "' (top-instance centers " + fmt(ca) + " vs " + fmt(cb) + ").";
      }
    }
    out.push_back(std::move(rel));
  }
  return out;
}

namespace {

class Gatherer {
 public:
  Gatherer(const EvidenceContext& ctx, const std::map<std::string, GroundingResult>& grounding, int round,
           EvidenceRegistry& registry, RoundEvidence& out)
      : ctx_(ctx), grounding_(grounding), round_(round), registry_(registry), out_(out) {}

  const GroundingResult* result(const std::string& phrase) const {
    auto it = grounding_.find(TargetKey::from_phrase(phrase).str());
    return it == grounding_.end() ? nullptr : &it->second;
  }

  bool textual(ClaimType t) const { return ctx_.gates->textual_enabled(t); }

  void add(EvidenceItem item) {
    auto id = registry_.add(std::move(item), round_);
    if (std::find(out_.ids.begin(), out_.ids.end(), id) == out_.ids.end()) out_.ids.push_back(std::move(id));
  }

  void seg(const GroundingResult& r) {
    if (!ctx_.grounding->use_seg_overlay || r.instances.empty()) return;
    auto& cached = overlays_[r.tkey.str()];
    if (!cached) cached = ImageData::of(render_overlay(*ctx_.image.image, r));
    EvidenceItem e;
    e.etype = EvidenceType::SegOverlay;
    e.target = r.tkey.str();
    e.id = make_evidence_id(e.etype, e.target);
    e.text = "segmentation overlay of '" + r.target + "' (" + std::to_string(r.instances.size()) + " instance(s))";
    e.image = cached;
    add(std::move(e));
  }

  void crop(const GroundingResult& r, std::size_t k) {
    if (!ctx_.grounding->use_crop_zoom || k >= r.instances.size()) return;
    EvidenceItem e;
    e.etype = EvidenceType::CropZoom;
    e.target = r.tkey.str();
    e.id = make_evidence_id(e.etype, e.target) + (k == 0 ? "" : "_" + std::to_string(k + 1));
    e.text = "crop-and-zoom of '" + r.target + "' instance " + std::to_string(k + 1) + " (score " +
             fixed2(r.instances[k].score) + ")";
    e.image = crop_image(r, k);
    add(std::move(e));
  }

  ImageData crop_image(const GroundingResult& r, std::size_t k) {
    auto& cached = crops_[{r.tkey.str(), k}];
    if (!cached) {
      cached = ImageData::of(
          crop_zoom(*ctx_.image.image, r.instances[k].bbox, ctx_.grounding->crop_margin, ctx_.grounding->crop_min_side));
    }
    return cached;
  }

  void color(const GroundingResult& r) {
    if (r.instances.empty()) return;
    if (ctx_.observer) {
      try {
        auto bundle = build_color_prompt(r.target, crop_image(r, 0), ctx_.image, *ctx_.templates);
        auto reply = observe(ChatRequest::from_bundle(bundle, ctx_.observer_model, ctx_.temperature, ctx_.max_tokens));
        if (auto c = parse_color_observation(reply, *ctx_.lexicon)) {
          add(derive_color(r, *c, reply));
          return;
        }
        out_.events.push_back({"evidence", "observer_unparsed", "color reply without a color term: " + reply});
      } catch (const Error& e) {
        if (!recoverable(e)) throw;
        out_.events.push_back({"evidence", "observer_error", e.what()});
      }
    }
    add(derive_color_fallback(*ctx_.image.image, r));
  }

  void count_vision(const GroundingResult& r, std::optional<int> claimed) {
    if (!ctx_.observer || !ctx_.loop->use_count_vision || !ctx_.grounding->use_bbox_render) return;
    if (!counted_.insert(r.tkey.str()).second) {
      // Already asked this round; re-add the same items with this claim's comparison.
      if (auto it = vision_counts_.find(r.tkey.str()); it != vision_counts_.end()) {
        for (auto& item : derive_count_vision(r, it->second, claimed)) add(std::move(item));
      }
      return;
    }
    try {
      auto boxes = ImageData::of(render_boxes(*ctx_.image.image, r));
      auto bundle = build_count_vision_prompt(r.target, boxes, *ctx_.templates);
      auto reply = observe(ChatRequest::from_bundle(bundle, ctx_.observer_model, ctx_.temperature, ctx_.max_tokens));
      auto n = parse_count_reply(reply, *ctx_.lexicon);
      if (!n) {
        out_.events.push_back({"evidence", "observer_unparsed", "count reply without a number: " + reply});
        return;
      }
      vision_counts_[r.tkey.str()] = *n;
      for (auto& item : derive_count_vision(r, *n, claimed)) add(std::move(item));
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      out_.events.push_back({"evidence", "observer_error", e.what()});
    }
  }

 private:
  static bool recoverable(const Error& e) {
    return e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::MalformedResponse;
  }

  std::string observe(const ChatRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    auto response = ctx_.observer->chat(request);
    out_.observer_ms +=
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    for (auto& ev : response.events) out_.events.push_back({"evidence", "retry", ev});
    return response.text;
  }

  const EvidenceContext& ctx_;
  const std::map<std::string, GroundingResult>& grounding_;
  int round_;
  EvidenceRegistry& registry_;
  RoundEvidence& out_;
  std::map<std::string, ImageData> overlays_;
  std::map<std::pair<std::string, std::size_t>, ImageData> crops_;
  std::set<std::string> counted_;
  std::map<std::string, int> vision_counts_;
};

}  // namespace

RoundEvidence gather_evidence(const EvidenceContext& ctx, const std::vector<Claim>& claims,
                              const std::map<std::string, GroundingResult>& grounding, bool escalate, int round,
                              EvidenceRegistry& registry) {
  RoundEvidence out;
  Gatherer g(ctx, grounding, round, registry, out);
  std::vector<const GroundingResult*> touched;
  auto touch = [&](const GroundingResult* r) {
    if (r && std::find(touched.begin(), touched.end(), r) == touched.end()) touched.push_back(r);
  };

  for (const auto& claim : claims) {
    const bool textual = g.textual(claim.type);
    switch (claim.type) {
      case ClaimType::Existence: {
        for (const auto& t : claim.targets) {
          const auto* r = g.result(t);
          if (!r) continue;
          touch(r);
          g.seg(*r);
          g.crop(*r, 0);
          if (textual) g.add(derive_existence(*r));
        }
        break;
      }
      case ClaimType::Count: {
        const auto claimed = claimed_count(claim.text, *ctx.lexicon);
        for (const auto& t : claim.targets) {
          const auto* r = g.result(t);
          if (!r) continue;
          touch(r);
          g.seg(*r);
          if (textual) {
            for (auto& item : derive_count(*r, claimed, ctx.grounding->max_instances)) g.add(std::move(item));
            g.count_vision(*r, claimed);
          }
        }
        break;
      }
      case ClaimType::Color: {
        for (const auto& t : claim.targets) {
          const auto* r = g.result(t);
          if (!r) continue;
          touch(r);
          g.seg(*r);
          g.crop(*r, 0);
          if (textual) g.color(*r);
        }
        break;
      }
      case ClaimType::Position: {
        std::vector<GroundingResult> results;
        for (const auto& t : claim.targets) {
          const auto* r = g.result(t);
          if (!r) continue;
          touch(r);
          g.seg(*r);
          results.push_back(*r);
        }
        if (textual && results.size() == claim.targets.size()) {
          for (auto& item : derive_position(ctx.image.image->width(), ctx.image.image->height(), results, claim)) {
            g.add(std::move(item));
          }
        }
        break;
      }
    }
  }

  if (escalate) {
    constexpr std::size_t kMaxEscalationCrops = 4;
    for (const auto* r : touched) {
      for (std::size_t k = 0; k < std::min(r->instances.size(), kMaxEscalationCrops); ++k) g.crop(*r, k);
      if (g.textual(ClaimType::Existence)) g.add(derive_existence(*r));
      g.count_vision(*r, std::nullopt);
    }
  }
  return out;
}

}  // namespace kestrel
