#ifndef USAMP_REPORTS_HPP
#define USAMP_REPORTS_HPP

// Plain-text tables printed by the command-line tool.

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "usamp/corpus.hpp"
#include "usamp/harness.hpp"

namespace usamp {

struct CategoryCount {
  std::string name;
  std::size_t count = 0;
  double frequency = 0.0;  // count / corpus size
};

inline std::vector<CategoryCount> category_counts(const std::vector<Document>& docs,
                                                  const std::vector<CategorySpec>& specs) {
  std::vector<CategoryCount> out;
  for (const auto& spec : specs) {
    CategoryCount c{spec.name, 0, 0.0};
    for (const auto& d : docs) c.count += matches_category(d.keyword, spec);
    c.frequency = docs.empty() ? 0.0 : static_cast<double>(c.count) / docs.size();
    out.push_back(c);
  }
  return out;
}

inline std::string format_count_table(const std::vector<CategoryCount>& counts,
                                      std::size_t corpus_size) {
  std::size_t width = 8;
  for (const auto& c : counts) width = std::max(width, c.name.size());
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %9s %10s\n", static_cast<int>(width), "category",
                "count", "frequency");
  out += line;
  for (const auto& c : counts) {
    std::snprintf(line, sizeof line, "%-*s %9zu %10.4f\n", static_cast<int>(width),
                  c.name.c_str(), c.count, c.frequency);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-*s %9zu\n", static_cast<int>(width), "documents",
                corpus_size);
  out += line;
  return out;
}

inline constexpr const char* kCurveHeader = "category,strategy,labeled_count,runs,mean_f1,sd_f1";

/// One row per (category, strategy, labeled_count) cell.
inline void write_curve_long(std::ostream& out, const std::vector<CurvePoint>& curves) {
  out << kCurveHeader << '\n';
  char buf[512];
  for (const auto& c : curves) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%zu,%.6f,%.6f\n", c.category.c_str(),
                  c.strategy.c_str(), c.labeled_count, c.f1.runs, c.f1.mean, c.f1.sd);
    out << buf;
  }
}

/// Per category, one line per labeled_count with a mean/SD column pair for
/// each strategy; cells a strategy never reached are left as "-".
inline std::string format_curve_table(const std::vector<CurvePoint>& curves) {
  std::map<std::string, std::map<std::size_t, std::map<std::string, const CurvePoint*>>> grid;
  std::map<std::string, std::set<std::string>> strategies;
  for (const auto& c : curves) {
    grid[c.category][c.labeled_count][c.strategy] = &c;
    strategies[c.category].insert(c.strategy);
  }
  std::string out;
  char buf[128];
  for (const auto& [category, rows] : grid) {
    out += "category " + category + "\n";
    std::snprintf(buf, sizeof buf, "%10s", "labeled");
    out += buf;
    for (const auto& s : strategies[category]) {
      std::snprintf(buf, sizeof buf, " %13s %8s", (s + " F").c_str(), "SD");
      out += buf;
    }
    out += '\n';
    for (const auto& [n, cells] : rows) {
      std::snprintf(buf, sizeof buf, "%10zu", n);
      out += buf;
      for (const auto& s : strategies[category]) {
        auto it = cells.find(s);
        if (it == cells.end()) {
          std::snprintf(buf, sizeof buf, " %13s %8s", "-", "-");
        } else {
          std::snprintf(buf, sizeof buf, " %13.4f %8.4f", it->second->f1.mean, it->second->f1.sd);
        }
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace usamp

#endif  // USAMP_REPORTS_HPP
