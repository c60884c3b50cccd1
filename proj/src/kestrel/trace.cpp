#include "kestrel/trace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "kestrel/error.hpp"
#include "kestrel/image.hpp"

namespace kestrel {

namespace fs = std::filesystem;

TraceWriter::TraceWriter(fs::path path, fs::path artifact_dir)
    : path_(std::move(path)), artifact_dir_(std::move(artifact_dir)) {
  std::error_code ec;
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path(), ec);
  if (!artifact_dir_.empty()) fs::create_directories(artifact_dir_, ec);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open trace file " + path_.string() + ": " + std::strerror(errno));
}

TraceWriter::~TraceWriter() {
  if (fd_ >= 0) ::close(fd_);
}

std::size_t TraceWriter::written() const {
  std::lock_guard lock(mu_);
  return written_;
}

void TraceWriter::append(const RunTrace& trace) {
  auto line = to_json(trace).dump();
  line.push_back('\n');
  std::lock_guard lock(mu_);
  write_artifacts(trace);
  std::size_t off = 0;
  while (off < line.size()) {
    const auto n = ::write(fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "trace write failed: " + std::string(std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
  ++written_;
}

void TraceWriter::write_artifacts(const RunTrace& trace) {
  if (artifact_dir_.empty()) return;
  for (const auto& r : trace.rounds) {
    for (const auto& e : r.evidence) {
      if (!e.image) continue;
      const auto target = artifact_dir_ / (e.image.hash + ".png");
      if (fs::exists(target)) continue;
      // Write then rename so a reader never sees half an artifact.
      auto tmp = target;
      tmp += ".tmp";
      write_png(*e.image.image, tmp);
      fs::rename(tmp, target);
    }
  }
}

void OrderedTraceWriter::submit(std::size_t index, RunTrace trace) {
  std::lock_guard lock(mu_);
  pending_.emplace(index, std::move(trace));
  while (!pending_.empty() && pending_.begin()->first == next_) {
    out_.append(pending_.begin()->second);
    pending_.erase(pending_.begin());
    ++next_;
  }
}

void OrderedTraceWriter::flush() {
  std::lock_guard lock(mu_);
  for (auto& [index, trace] : pending_) {
    out_.append(trace);
    next_ = index + 1;
  }
  pending_.clear();
}

TraceLoad load_traces(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open trace file " + path.string());
  TraceLoad out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.traces.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      out.diagnostics.push_back({number, e.what()});
    }
  }
  return out;
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string joined(const std::vector<std::string>& v, const char* sep = ", ") {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : sep) + s;
  return out;
}

}  // namespace

std::string render_trace(const RunTrace& t) {
  std::ostringstream o;
  o << "sample " << t.sample_id << "\n";
  o << "question: " << t.question << "\n";
  o << "image: " << t.image << "\n";
  o << "expected claim type: " << to_string(t.expected_type) << "\n";
  o << "initial answer: " << to_string(t.initial_answer);
  if (!t.flags.empty()) o << "  [" << joined(t.flags) << "]";
  o << "\n";
  if (t.yes_guard) {
    o << "yes-guard: " << to_string(t.yes_guard->answer) << " (" << to_string(t.yes_guard->confidence) << ") "
      << t.yes_guard->reason << "\n";
  }
  for (const auto& c : t.initial_claims) o << "initial claim " << c.id << ": " << c.text << "\n";

  for (const auto& r : t.rounds) {
    o << "\nround " << r.round;
    if (!r.flags.empty()) o << "  [" << joined(r.flags) << "]";
    o << "\n  claims:\n";
    for (const auto& c : r.claims) {
      o << "    " << c.id << " [" << to_string(c.type) << ", priority " << c.priority << "] " << c.text
        << "  targets: " << joined(c.targets) << "\n";
    }
    if (!r.grounding.empty()) o << "  grounding:\n";
    for (const auto& g : r.grounding) {
      o << "    '" << g.target << "': " << g.scores.size() << " kept of " << g.raw_scores.size() << " at threshold "
        << fixed(g.threshold_used) << (g.rechecked ? " (recheck)" : "") << (g.cached ? " (cached)" : "") << "\n";
    }
    o << "  evidence:\n";
    if (r.evidence.empty()) o << "    (none)\n";
    for (const auto& e : r.evidence) {
      o << "    [" << e.id << "] (" << to_string(e.etype) << ") " << e.text;
      if (is_image_evidence(e.etype)) {
        const auto& h = e.image ? e.image.hash : e.image_hash;
        if (!h.empty()) o << " <artifacts/" << h << ".png>";
      }
      o << "\n";
    }
    o << "  verification: " << to_string(r.report.verdict);
    if (r.report.skipped) o << " (skipped" << (r.report.parse_error.empty() ? "" : ": " + r.report.parse_error) << ")";
    if (r.report.repaired) o << " (repaired)";
    o << "\n";
    for (const auto& c : r.report.checked) {
      o << "    " << c.claim_id << ": " << to_string(c.status) << " " << fixed(c.confidence)
        << " cites [" << joined(c.citations) << "]";
      if (c.original_status != c.status) o << " (judged " << to_string(c.original_status) << ")";
      if (!c.stripped_citations.empty()) o << " stripped [" << joined(c.stripped_citations) << "]";
      if (!c.why.empty()) o << " - " << c.why;
      o << "\n";
    }
    o << "  refine: proposed " << (r.proposed_answer ? std::string(to_string(*r.proposed_answer)) : "nothing");
    if (!r.refine_error.empty()) o << " (" << r.refine_error << ")";
    o << "\n";
    o << "  gate: " << to_string(r.gate_decision) << ", answer " << to_string(r.answer_before) << " -> "
      << to_string(r.answer_after);
    if (!r.trigger_claims.empty()) {
      o << " (triggered by " << joined(r.trigger_claims) << "; citations " << joined(r.trigger_citations) << ")";
    }
    o << "\n";
  }

  o << "\nfinal answer: " << to_string(t.final_answer) << "\n";
  o << "stop reason: " << (t.stop_reason ? std::string(to_string(*t.stop_reason)) : "none") << "\n";
  if (!t.error_stage.empty()) o << "failed at stage " << t.error_stage << ": " << t.error << "\n";
  return o.str();
}

std::vector<std::string> dangling_citations(const RunTrace& trace) {
  std::vector<std::string> out;
  for (const auto& r : trace.rounds) {
    std::set<std::string> ids;
    for (const auto& e : r.evidence) ids.insert(e.id);
    auto check = [&](const std::string& id) {
      if (!ids.count(id)) out.push_back(id);
    };
    for (const auto& c : r.report.checked) {
      for (const auto& id : c.citations) check(id);
    }
    for (const auto& id : r.trigger_citations) check(id);
  }
  return out;
}

}  // namespace kestrel
