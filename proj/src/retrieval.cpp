#include "dsq/retrieval.hpp"

#include <cctype>
#include <cmath>

#include "dsq/error.hpp"
#include "dsq/text.hpp"

namespace dsq {

void ChunkerParams::validate() const {
  if (min_chars <= overlap_chars) {
    throw Error(ErrorCode::ConfigError, "chunker min_chars must exceed overlap_chars");
  }
  if (target_chars < min_chars || target_chars > 1000) {
    throw Error(ErrorCode::ConfigError, "chunker target_chars must lie in [min_chars, 1000]");
  }
}

std::string_view to_string(PassageSource source) {
  return source == PassageSource::Page ? "page" : "snippet";
}

PassageSource passage_source_from_string(std::string_view value) {
  auto lower = text::to_lower(value);
  if (lower == "page") return PassageSource::Page;
  if (lower == "snippet") return PassageSource::Snippet;
  throw Error(ErrorCode::ConfigError, "unknown passage source '" + std::string(value) + "'");
}

void to_json(nlohmann::json& j, const Passage& p) {
  j = nlohmann::json{{"text", p.text},
                     {"source_url", p.source_url},
                     {"page_rank", p.page_rank},
                     {"char_span", {p.char_span.start, p.char_span.end}}};
}

void from_json(const nlohmann::json& j, Passage& p) {
  p.text = j.at("text").get<std::string>();
  p.source_url = j.at("source_url").get<std::string>();
  p.page_rank = j.at("page_rank").get<int>();
  p.char_span = {j.at("char_span").at(0).get<std::size_t>(),
                 j.at("char_span").at(1).get<std::size_t>()};
}

void to_json(nlohmann::json& j, const PageInfo& p) {
  j = nlohmann::json{{"url", p.url}, {"rank", p.rank}, {"title", p.title},
                     {"content_chars", p.content_chars}};
}

void from_json(const nlohmann::json& j, PageInfo& p) {
  p.url = j.at("url").get<std::string>();
  p.rank = j.at("rank").get<int>();
  p.title = j.value("title", "");
  p.content_chars = j.value("content_chars", std::size_t{0});
}

void to_json(nlohmann::json& j, const RetrievalOutcome& o) {
  j = nlohmann::json{{"query", o.query},
                     {"pages", o.pages},
                     {"passages", o.passages},
                     {"scores", o.scores}};
  j["selected_index"] = o.selected_index ? nlohmann::json(*o.selected_index) : nlohmann::json(nullptr);
  j["selected"] = o.selected ? nlohmann::json(*o.selected) : nlohmann::json(nullptr);
  if (!o.empty_reason.empty()) j["empty_reason"] = o.empty_reason;
}

void from_json(const nlohmann::json& j, RetrievalOutcome& o) {
  o.query = j.at("query").get<std::string>();
  o.pages = j.at("pages").get<std::vector<PageInfo>>();
  o.passages = j.at("passages").get<std::vector<Passage>>();
  o.scores = j.at("scores").get<std::vector<double>>();
  o.selected_index.reset();
  o.selected.reset();
  if (j.contains("selected_index") && !j["selected_index"].is_null()) {
    o.selected_index = j["selected_index"].get<std::size_t>();
  }
  if (j.contains("selected") && !j["selected"].is_null()) o.selected = j["selected"].get<Passage>();
  o.empty_reason = j.value("empty_reason", "");
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool sentence_end_at(std::string_view s, std::size_t e) {
  if (e == 0 || e > s.size()) return false;
  char last = s[e - 1];
  if (last == '\n') return true;
  if (last != '.' && last != '!' && last != '?') return false;
  return e == s.size() || is_space(s[e]);
}

}  // namespace

std::vector<Passage> chunk_page(const SearchPage& page, const ChunkerParams& params) {
  params.validate();
  const std::string_view body = page.raw_content;
  const std::size_t n = body.size();
  std::vector<Passage> out;
  if (n == 0) return out;

  auto emit = [&](std::size_t a, std::size_t b) {
    out.push_back({std::string(body.substr(a, b - a)), page.url, page.rank, {a, b}});
  };

  std::size_t start = 0;
  while (true) {
    if (n - start <= params.target_chars) {
      emit(start, n);
      break;
    }
    const std::size_t floor = start + params.min_chars;
    std::size_t hard_end = text::utf8_floor(body, start + params.target_chars);
    if (hard_end < floor) {
      // A multi-byte character straddles a cut with no room below it.
      hard_end = start + params.target_chars;
      while (hard_end < n && (static_cast<unsigned char>(body[hard_end]) & 0xC0) == 0x80) ++hard_end;
    }
    std::size_t end = 0;
    for (std::size_t e = hard_end; e >= floor && e > start; --e) {
      if (sentence_end_at(body, e)) {
        end = e;
        break;
      }
    }
    if (end == 0) {
      for (std::size_t e = hard_end; e >= floor && e > start; --e) {
        if (is_space(body[e])) {
          end = e;
          break;
        }
      }
    }
    if (end == 0) end = hard_end;
    emit(start, end);
    if (end == n) break;

    // Round forward so the overlap never exceeds overlap_chars; the next chunk
    // then always ends past this one.
    std::size_t next = end - params.overlap_chars;
    while (next < end && (static_cast<unsigned char>(body[next]) & 0xC0) == 0x80) ++next;
    // Start the overlap on a word boundary when one exists inside it.
    std::size_t snapped = next;
    while (snapped < end && snapped > 0 && !is_space(body[snapped - 1])) ++snapped;
    while (snapped < end && is_space(body[snapped])) ++snapped;
    if (snapped < end) next = snapped;
    if (next <= start) next = end;
    start = next;
  }
  return out;
}

std::vector<Passage> interleave_passages(const std::vector<std::vector<Passage>>& per_page,
                                         std::size_t max_passages) {
  std::vector<Passage> out;
  for (std::size_t round = 0; out.size() < max_passages; ++round) {
    bool any = false;
    for (const auto& chunks : per_page) {
      if (round >= chunks.size()) continue;
      any = true;
      out.push_back(chunks[round]);
      if (out.size() == max_passages) break;
    }
    if (!any) break;
  }
  return out;
}

std::optional<std::size_t> select_passage(std::span<const Passage> passages,
                                          std::span<const double> scores) {
  if (passages.size() != scores.size()) {
    throw Error(ErrorCode::LengthMismatch, "scores and passages differ in length");
  }
  std::optional<std::size_t> best;
  auto key = [&](std::size_t i) { return std::isnan(scores[i]) ? -INFINITY : scores[i]; };
  for (std::size_t i = 0; i < passages.size(); ++i) {
    if (!best) {
      best = i;
      continue;
    }
    const auto& a = passages[i];
    const auto& b = passages[*best];
    const double sa = key(i);
    const double sb = key(*best);
    if (sa > sb ||
        (sa == sb && (a.page_rank < b.page_rank ||
                      (a.page_rank == b.page_rank && a.char_span.start < b.char_span.start)))) {
      best = i;
    }
  }
  return best;
}

Retriever::Retriever(std::shared_ptr<const BackendHub> hub, RetrievalOptions options)
    : hub_(std::move(hub)), options_(std::move(options)) {
  options_.chunker.validate();
  if (options_.page_limit < 1) throw Error(ErrorCode::ConfigError, "page_limit must be >= 1");
  if (options_.max_passages < 1) throw Error(ErrorCode::ConfigError, "max_passages must be >= 1");
}

RetrievalOutcome Retriever::retrieve(const std::string& query) const {
  if (text::is_blank(query)) throw Error(ErrorCode::InvalidArgument, "query must be non-empty");
  RetrievalOutcome outcome;
  outcome.query = query;

  std::vector<SearchPage> pages;
  try {
    pages = hub_->search(query, options_.page_limit);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyResults) throw;
    outcome.empty_reason = "empty_results";
    return outcome;
  }

  std::vector<std::vector<Passage>> per_page;
  for (const auto& page : pages) {
    outcome.pages.push_back({page.url, page.rank, page.title, page.raw_content.size()});
    if (options_.source == PassageSource::Snippet) {
      auto snippet = std::string(text::utf8_prefix(text::trim(page.snippet), 1000));
      if (snippet.empty()) {
        per_page.emplace_back();
      } else {
        per_page.push_back({{snippet, page.url, page.rank, {0, snippet.size()}}});
      }
    } else {
      per_page.push_back(chunk_page(page, options_.chunker));
    }
  }
  outcome.passages = interleave_passages(per_page, options_.max_passages);
  if (outcome.passages.empty()) {
    outcome.empty_reason = "no_passages";
    return outcome;
  }

  RerankRequest request{query, {}};
  for (const auto& p : outcome.passages) request.passages.push_back(p.text);
  outcome.scores = hub_->rerank(request);
  outcome.selected_index = select_passage(outcome.passages, outcome.scores);
  if (outcome.selected_index) outcome.selected = outcome.passages[*outcome.selected_index];
  return outcome;
}

}  // namespace dsq
