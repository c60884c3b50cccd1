#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "kestrel/records.hpp"

namespace kestrel {

/// Append-only line-delimited trace file. Each record is written with a
/// single write(2) on an O_APPEND descriptor, so a crash leaves whole lines.
/// Image evidence is stored once as <artifact_dir>/<sha>.png.
class TraceWriter {
 public:
  /// Throws Error(IoError). An empty artifact_dir skips artifact export.
  explicit TraceWriter(std::filesystem::path path, std::filesystem::path artifact_dir = {});
  ~TraceWriter();
  TraceWriter(const TraceWriter&) = delete;
  TraceWriter& operator=(const TraceWriter&) = delete;

  void append(const RunTrace& trace);
  std::size_t written() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void write_artifacts(const RunTrace& trace);

  std::filesystem::path path_;
  std::filesystem::path artifact_dir_;
  mutable std::mutex mu_;
  int fd_ = -1;
  std::size_t written_ = 0;
};

/// Funnels traces finished out of order (by worker) into input order.
class OrderedTraceWriter {
 public:
  explicit OrderedTraceWriter(TraceWriter& out) : out_(out) {}
  void submit(std::size_t index, RunTrace trace);
  /// Writes everything still buffered, skipping gaps.
  void flush();

 private:
  TraceWriter& out_;
  std::mutex mu_;
  std::size_t next_ = 0;
  std::map<std::size_t, RunTrace> pending_;
};

struct TraceDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct TraceLoad {
  std::vector<RunTrace> traces;
  std::vector<TraceDiagnostic> diagnostics;
};

/// Tolerant loader: corrupt lines become diagnostics. Blank lines are skipped.
/// Throws Error(IoError) when the file cannot be opened.
TraceLoad load_traces(const std::filesystem::path& path);

/// Per-round human-readable dump.
std::string render_trace(const RunTrace& trace);

/// Evidence IDs cited in a record that its own rounds do not contain.
std::vector<std::string> dangling_citations(const RunTrace& trace);

}  // namespace kestrel
