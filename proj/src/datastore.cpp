#include "tap/datastore.hpp"

#include <sstream>

#include "tap/errors.hpp"

namespace tap {

DatasetWriter::DatasetWriter(const std::filesystem::path& path, bool truncate)
    : path_(path),
      out_(path, truncate ? std::ios::out | std::ios::trunc
                          : std::ios::out | std::ios::app) {
  if (!out_) throw IoError("cannot open dataset for writing: " + path.string());
}

void DatasetWriter::write(const Transition& t) {
  out_ << transition_to_json(t).dump() << '\n';
  if (!out_) throw IoError("write failed: " + path_.string());
  ++written_;
}

void DatasetWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("flush failed: " + path_.string());
}

void append_transition(const std::filesystem::path& path, const Transition& t) {
  DatasetWriter w(path);
  w.write(t);
  w.flush();
}

void write_dataset(const std::filesystem::path& path, std::span<const Transition> dataset) {
  DatasetWriter w(path, true);
  for (const auto& t : dataset) w.write(t);
  w.flush();
}

namespace {

template <class F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    f(line, line_no);
  }
}

Json parse_line(const std::string& line, std::size_t line_no,
                const std::filesystem::path& path) {
  try {
    return Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                     line_no);
  }
}

}  // namespace

std::vector<Transition> load_dataset(const std::filesystem::path& path, bool validate) {
  std::vector<Transition> out;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const Json j = parse_line(line, line_no, path);
    Transition t;
    try {
      t = transition_from_json(j);
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
    if (validate) {
      const std::string problem = check_transition(t);
      if (!problem.empty()) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": invalid transition: " + problem,
                         line_no);
      }
    }
    out.push_back(std::move(t));
  });
  return out;
}

void write_tasks(const std::filesystem::path& path, std::span<const TaskRecord> tasks) {
  std::ofstream out(path, std::ios::out | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& t : tasks) out << task_record_to_json(t).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<TaskRecord> load_tasks(const std::filesystem::path& path) {
  std::vector<TaskRecord> out;
  for_each_line(path, [&](const std::string& line, std::size_t line_no) {
    const Json j = parse_line(line, line_no, path);
    try {
      out.push_back(task_record_from_json(j));
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(),
                       line_no);
    }
  });
  return out;
}

Json report_to_json(const RunReport& r) {
  return {{"schema_version", kReportSchemaVersion},
          {"run_id", r.run_id},
          {"command", r.command},
          {"seed", r.seed},
          {"config", r.config},
          {"metrics", r.metrics},
          {"summary", r.summary},
          {"env_queries", r.env_queries},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

RunReport report_from_json(const Json& j) {
  RunReport r;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw ParseError("report: unsupported schema_version " + std::to_string(version), 0);
    }
    r.run_id = j.at("run_id").get<std::string>();
    r.command = j.at("command").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    r.metrics = j.at("metrics");
    r.summary = j.at("summary");
    r.env_queries = j.at("env_queries").get<std::size_t>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report: ") + e.what(), 0);
  }
  return r;
}

void write_report(const RunReport& report, const std::filesystem::path& path) {
  write_text_file(path, report_to_json(report).dump(2) + "\n");
}

RunReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_json_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

}  // namespace tap
