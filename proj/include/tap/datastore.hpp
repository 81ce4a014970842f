#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "tap/chain.hpp"
#include "tap/json_io.hpp"
#include "tap/transition.hpp"

namespace tap {

/// Appends one compact JSON object per line. Single writer per file.
class DatasetWriter {
 public:
  /// Throws IoError naming the path if it cannot be opened.
  explicit DatasetWriter(const std::filesystem::path& path, bool truncate = false);
  void write(const Transition& t);
  void flush();
  std::size_t written() const { return written_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t written_ = 0;
};

void append_transition(const std::filesystem::path& path, const Transition& t);
/// Replaces the file with `dataset`.
void write_dataset(const std::filesystem::path& path, std::span<const Transition> dataset);
/// Blank lines are skipped. A malformed line throws ParseError whose position
/// is the 1-based line number; with `validate`, so does a record that fails
/// check_transition.
std::vector<Transition> load_dataset(const std::filesystem::path& path,
                                     bool validate = true);

/// Task records, one JSON object per line.
void write_tasks(const std::filesystem::path& path, std::span<const TaskRecord> tasks);
std::vector<TaskRecord> load_tasks(const std::filesystem::path& path);

inline constexpr int kReportSchemaVersion = 1;

struct RunReport {
  std::string run_id;
  std::string command;
  std::uint64_t seed = 0;
  Json config = Json::object();
  Json metrics = Json::array();  // per-step or per-trial records
  Json summary = Json::object();
  std::size_t env_queries = 0;
  double wall_clock_seconds = 0.0;
};

Json report_to_json(const RunReport& report);
/// Throws ParseError if the schema version is missing or unsupported.
RunReport report_from_json(const Json& j);
/// Pretty-printed JSON with a trailing newline.
void write_report(const RunReport& report, const std::filesystem::path& path);
RunReport read_report(const std::filesystem::path& path);

/// Whole-file helpers; IoError names the path.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
Json read_json_file(const std::filesystem::path& path);

}  // namespace tap
