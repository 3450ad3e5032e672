#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "rankprop/core.hpp"

namespace rankprop {

struct RejectedLine {
  std::string path;
  std::size_t line_number = 0;
  std::string error_class;
  std::string message;
};

struct MergeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  // Lines whose timestamp is earlier than the previous accepted line of the
  // same file. They are still yielded.
  std::size_t out_of_order = 0;
  std::vector<RejectedLine> rejects;
};

/// Lazily reads line-delimited session records from a list of files, one file
/// after another, in file order. Malformed or invalid lines are counted and
/// skipped. When a file finishes and the cumulative reject fraction exceeds
/// `max_reject_fraction`, next() throws RejectRateError.
class SessionLogReader {
 public:
  explicit SessionLogReader(std::vector<std::filesystem::path> paths,
                            double max_reject_fraction = 0.01)
      : paths_(std::move(paths)), max_reject_fraction_(max_reject_fraction) {}

  std::optional<SearchSession> next() {
    for (;;) {
      if (!in_.is_open()) {
        if (file_index_ >= paths_.size()) return std::nullopt;
        open(paths_[file_index_]);
      }
      std::string line;
      if (!std::getline(in_, line)) {
        in_.close();
        ++file_index_;
        check_reject_rate();
        continue;
      }
      ++line_number_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        SearchSession s = validate_session(std::string_view(line));
        if (have_last_ts_ && s.ts_ms < last_ts_) ++stats_.out_of_order;
        last_ts_ = s.ts_ms;
        have_last_ts_ = true;
        ++stats_.accepted;
        return s;
      } catch (const Error& e) {
        ++stats_.rejected;
        if (stats_.rejects.size() < kMaxRecordedRejects) {
          stats_.rejects.push_back({paths_[file_index_].string(), line_number_, e.error_class(), e.what()});
        }
      }
    }
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    while (auto s = next()) fn(*s);
  }

  const MergeStats& stats() const noexcept { return stats_; }

 private:
  static constexpr std::size_t kMaxRecordedRejects = 100;

  void open(const std::filesystem::path& p) {
    in_.clear();
    in_.open(p);
    if (!in_) throw IoError("cannot read log file '" + p.string() + "'");
    line_number_ = 0;
    have_last_ts_ = false;
  }

  void check_reject_rate() const {
    const auto total = stats_.accepted + stats_.rejected;
    if (total == 0) return;
    const double fraction = static_cast<double>(stats_.rejected) / static_cast<double>(total);
    if (fraction > max_reject_fraction_) {
      throw RejectRateError(std::to_string(stats_.rejected) + " of " + std::to_string(total) +
                            " lines rejected, above threshold " + std::to_string(max_reject_fraction_));
    }
  }

  std::vector<std::filesystem::path> paths_;
  double max_reject_fraction_;
  std::size_t file_index_ = 0;
  std::ifstream in_;
  std::size_t line_number_ = 0;
  std::int64_t last_ts_ = 0;
  bool have_last_ts_ = false;
  MergeStats stats_;
};

inline SessionLogReader merge_logs(std::vector<std::filesystem::path> paths,
                                   double max_reject_fraction = 0.01) {
  return SessionLogReader(std::move(paths), max_reject_fraction);
}

/// Reads everything into memory. Meant for small logs and tests.
inline std::vector<SearchSession> read_all_sessions(const std::vector<std::filesystem::path>& paths,
                                                    double max_reject_fraction = 0.01) {
  SessionLogReader reader(paths, max_reject_fraction);
  std::vector<SearchSession> out;
  reader.for_each([&](const SearchSession& s) { out.push_back(s); });
  return out;
}

inline void write_session_line(std::ostream& os, const SearchSession& s) {
  os << serialize_session(s) << '\n';
}

}  // namespace rankprop
