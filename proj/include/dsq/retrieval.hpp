#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsq/backends.hpp"

namespace dsq {

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const CharSpan&) const = default;
};

struct Passage {
  std::string text;
  std::string source_url;
  int page_rank = 1;
  CharSpan char_span;  // byte offsets into the page's extracted text

  bool operator==(const Passage&) const = default;
};

struct ChunkerParams {
  std::size_t target_chars = 400;
  std::size_t overlap_chars = 100;
  std::size_t min_chars = 200;

  /// min_chars must exceed overlap_chars (guarantees forward progress) and
  /// target_chars must lie in [min_chars, 1000].
  void validate() const;
  bool operator==(const ChunkerParams&) const = default;
};

enum class PassageSource { Page, Snippet };

std::string_view to_string(PassageSource source);
PassageSource passage_source_from_string(std::string_view text);

/// Page metadata kept in outcomes and traces; the text itself lives in passages.
struct PageInfo {
  std::string url;
  int rank = 1;
  std::string title;
  std::size_t content_chars = 0;

  bool operator==(const PageInfo&) const = default;
};

struct RetrievalOutcome {
  std::string query;
  std::vector<PageInfo> pages;
  std::vector<Passage> passages;
  std::vector<double> scores;
  std::optional<std::size_t> selected_index;
  std::optional<Passage> selected;
  // Why nothing was selected, when nothing was: "empty_results", "no_passages".
  std::string empty_reason;

  bool operator==(const RetrievalOutcome&) const = default;
};

void to_json(nlohmann::json& j, const Passage& p);
void from_json(const nlohmann::json& j, Passage& p);
void to_json(nlohmann::json& j, const PageInfo& p);
void from_json(const nlohmann::json& j, PageInfo& p);
void to_json(nlohmann::json& j, const RetrievalOutcome& o);
void from_json(const nlohmann::json& j, RetrievalOutcome& o);

/// Sliding windows of up to target_chars with at most overlap_chars of
/// overlap, ending on a sentence boundary when one lies in [min_chars,
/// target_chars] and otherwise on whitespace. Every chunk but a page's last is
/// at least min_chars long; chunk spans cover the whole text and never split a
/// UTF-8 sequence. When target_chars - min_chars < 4 a straddling multi-byte
/// character can push a chunk up to 3 bytes past target_chars.
/// Empty text -> no chunks.
std::vector<Passage> chunk_page(const SearchPage& page, const ChunkerParams& params = {});

/// Round-robin over pages (first chunk of each page, then second, ...) up to
/// max_passages.
std::vector<Passage> interleave_passages(const std::vector<std::vector<Passage>>& per_page,
                                         std::size_t max_passages);

/// Index of the best-scored passage; ties go to the lower page rank, then the
/// earlier span start, then the earlier position. nullopt for empty input.
std::optional<std::size_t> select_passage(std::span<const Passage> passages,
                                          std::span<const double> scores);

struct RetrievalOptions {
  int page_limit = 3;
  std::size_t max_passages = 50;
  ChunkerParams chunker;
  PassageSource source = PassageSource::Page;
};

class Retriever {
 public:
  Retriever(std::shared_ptr<const BackendHub> hub, RetrievalOptions options = {});

  /// Search, chunk, rerank, select. EmptyResults from search produces an
  /// outcome without a selection; other errors propagate.
  RetrievalOutcome retrieve(const std::string& query) const;

  const RetrievalOptions& options() const { return options_; }

 private:
  std::shared_ptr<const BackendHub> hub_;
  RetrievalOptions options_;
};

}  // namespace dsq
