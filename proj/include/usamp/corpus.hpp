#ifndef USAMP_CORPUS_HPP
#define USAMP_CORPUS_HPP

// Title corpora: tokenization, TSV ingestion, keyword-substring categories
// and seeded train/test splits.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "usamp/error.hpp"
#include "usamp/rng.hpp"

namespace usamp {

enum class Label : std::uint8_t { negative = 0, positive = 1 };

inline bool is_positive(Label l) { return l == Label::positive; }
inline Label label_from_bool(bool positive) {
  return positive ? Label::positive : Label::negative;
}

struct Document {
  std::string doc_id;
  std::string keyword;
  std::string title;
};

struct TokenizedDoc {
  std::string doc_id;
  std::vector<std::string> tokens;
};

struct LabeledExample {
  std::string doc_id;
  std::vector<std::string> tokens;
  Label label = Label::negative;
};

struct CategorySpec {
  std::string name;
  std::vector<std::string> substrings;
};

using LabelMap = std::unordered_map<std::string, Label>;

namespace detail {

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

// Bytes >= 0x80 (UTF-8 sequences) count as word characters.
inline bool is_word_char(unsigned char c) {
  return c >= 0x80 || std::isalnum(c) != 0;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

/// Lowercases, deletes punctuation (anything neither alphanumeric nor
/// whitespace) and splits on whitespace runs. "R&D" becomes "rd".
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (detail::is_space(c)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (detail::is_word_char(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline TokenizedDoc tokenize(const Document& doc) {
  return TokenizedDoc{doc.doc_id, tokenize(doc.title)};
}

inline std::vector<TokenizedDoc> tokenize_all(const std::vector<Document>& docs) {
  std::vector<TokenizedDoc> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(tokenize(d));
  return out;
}

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<Document> documents;
  std::vector<LineError> errors;
  std::size_t lines_read = 0;  // non-empty lines
};

/// Reads `doc_id<TAB>keyword<TAB>title` lines. Malformed lines are skipped
/// and reported; a repeated doc_id throws.
inline LoadResult load_corpus(std::istream& in) {
  LoadResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ++result.lines_read;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos
                                            : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      result.errors.push_back({lineno, "expected 3 tab-separated columns"});
      continue;
    }
    Document doc{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                 line.substr(t2 + 1)};
    if (doc.doc_id.empty()) {
      result.errors.push_back({lineno, "empty doc_id"});
      continue;
    }
    if (detail::trim(doc.title).empty()) {
      result.errors.push_back({lineno, "empty title"});
      continue;
    }
    if (!seen.insert(doc.doc_id).second) {
      throw data_error("duplicate doc_id '" + doc.doc_id + "' at line " +
                       std::to_string(lineno));
    }
    result.documents.push_back(std::move(doc));
  }
  return result;
}

inline void write_corpus(std::ostream& out, const std::vector<Document>& docs) {
  for (const auto& d : docs) {
    out << d.doc_id << '\t' << d.keyword << '\t' << d.title << '\n';
  }
}

/// One JSON object per line: {"name": ..., "substrings": [...]}.
inline std::vector<CategorySpec> load_category_specs(std::istream& in) {
  std::vector<CategorySpec> specs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw data_error("category spec line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    CategorySpec spec;
    try {
      spec.name = j.at("name").get<std::string>();
      spec.substrings = j.at("substrings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw data_error("category spec line " + std::to_string(lineno) + ": " +
                       e.what());
    }
    if (spec.name.empty() || spec.substrings.empty()) {
      throw data_error("category spec line " + std::to_string(lineno) +
                       ": name and a non-empty substrings list are required");
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

inline bool matches_category(std::string_view keyword, const CategorySpec& spec) {
  const std::string kw = detail::lowercase(keyword);
  return std::any_of(spec.substrings.begin(), spec.substrings.end(),
                     [&](const std::string& s) {
                       return kw.find(detail::lowercase(s)) != std::string::npos;
                     });
}

inline LabelMap assign_labels(const std::vector<Document>& corpus,
                              const CategorySpec& spec) {
  LabelMap labels;
  labels.reserve(corpus.size());
  for (const auto& d : corpus) {
    labels.emplace(d.doc_id, label_from_bool(matches_category(d.keyword, spec)));
  }
  return labels;
}

template <typename Doc>
struct Split {
  std::vector<Doc> train;
  std::vector<Doc> test;
};

/// Seeded random partition. The test side receives round(n * fraction)
/// items; both sides keep the corpus order.
template <typename Doc>
Split<Doc> split(const std::vector<Doc>& corpus, double test_fraction,
                 std::uint64_t seed) {
  if (corpus.empty()) throw data_error("split: empty corpus");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw usage_error("split: test fraction must lie in (0, 1)");
  }
  const std::size_t n = corpus.size();
  const auto n_test =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test == n) {
    throw usage_error("split: fraction leaves one side empty");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<char> in_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) in_test[perm[i]] = 1;
  Split<Doc> out;
  out.train.reserve(n - n_test);
  out.test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) {
    (in_test[i] ? out.test : out.train).push_back(corpus[i]);
  }
  return out;
}

}  // namespace usamp

#endif  // USAMP_CORPUS_HPP
