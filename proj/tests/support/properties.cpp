#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/retrieval.hpp"
#include "support.hpp"

namespace dsq::testkit {

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string random_page_text(Rng& rng) {
  static const char* const kWords[] = {"the", "band", "played", "a", "long", "set", "in",
                                       "Singapore", "grindcore", "caf\xC3\xA9", "na\xC3\xAFve",
                                       "\xE2\x80\x94", "tour", "2015", "records"};
  static const char* const kEnds[] = {".", "!", "?", "\n", ",", ""};
  const std::size_t words = pick(rng, 0, 400);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (!out.empty()) out += pick(rng, 0, 9) == 0 ? "  " : " ";
    // Occasional very long token forces a hard cut.
    if (pick(rng, 0, 60) == 0) {
      out += std::string(pick(rng, 50, 900), 'x');
    } else {
      out += kWords[pick(rng, 0, std::size(kWords) - 1)];
    }
    if (pick(rng, 0, 7) == 0) out += kEnds[pick(rng, 0, std::size(kEnds) - 1)];
  }
  return out;
}

ChunkerParams random_chunker(Rng& rng) {
  ChunkerParams p;
  p.overlap_chars = pick(rng, 0, 150);
  p.min_chars = pick(rng, p.overlap_chars + 1, 400);
  p.target_chars = pick(rng, p.min_chars, 1000);
  return p;
}

bool is_lead_byte(const std::string& s, std::size_t pos) {
  return pos == s.size() || (static_cast<unsigned char>(s[pos]) & 0xC0) != 0x80;
}

std::string describe(const ChunkerParams& p, std::size_t n) {
  std::ostringstream os;
  os << "target=" << p.target_chars << " overlap=" << p.overlap_chars << " min=" << p.min_chars
     << " len=" << n;
  return os.str();
}

std::vector<Passage> random_passages(Rng& rng, std::vector<double>& scores) {
  const std::size_t n = pick(rng, 1, 40);
  std::vector<Passage> passages;
  scores.clear();
  // A small value range makes ties common.
  const bool coarse = pick(rng, 0, 1) == 0;
  for (std::size_t i = 0; i < n; ++i) {
    Passage p;
    p.page_rank = static_cast<int>(pick(rng, 1, 3));
    p.char_span.start = pick(rng, 0, 5) * 100;
    p.char_span.end = p.char_span.start + 300;
    p.source_url = "https://example.org/" + std::to_string(p.page_rank);
    p.text = "passage " + std::to_string(i);
    passages.push_back(p);
    double s = coarse ? static_cast<double>(pick(rng, 0, 3))
                      : std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
    if (pick(rng, 0, 30) == 0) s = std::numeric_limits<double>::quiet_NaN();
    scores.push_back(s);
  }
  return passages;
}

// Reference selection: sort candidate indices by the documented key.
std::size_t reference_select(const std::vector<Passage>& p, const std::vector<double>& s) {
  auto key = [&](std::size_t i) {
    return std::isnan(s[i]) ? -std::numeric_limits<double>::infinity() : s[i];
  };
  std::vector<std::size_t> idx(p.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key(a) != key(b)) return key(a) > key(b);
    if (p[a].page_rank != p[b].page_rank) return p[a].page_rank < p[b].page_rank;
    if (p[a].char_span.start != p[b].char_span.start) {
      return p[a].char_span.start < p[b].char_span.start;
    }
    return a < b;
  });
  return idx.front();
}

// --- fallback ladder ------------------------------------------------------

enum class TopicFault { Ok, Absent, Blank, Error };
enum class DirectiveFault { Ok, Empty, Error };
enum class QueryFault { Ok, Trivial, Empty, Error };
enum class SearchFault { Ok, NoHits, BlankPages, Error, RerankError };

struct Faults {
  PipelineMode mode;
  TopicFault topic;
  DirectiveFault directive;
  QueryFault query;
  SearchFault search;
};

std::string describe(const Faults& f) {
  std::ostringstream os;
  os << "mode=" << to_string(f.mode) << " topic=" << static_cast<int>(f.topic)
     << " directive=" << static_cast<int>(f.directive) << " query=" << static_cast<int>(f.query)
     << " search=" << static_cast<int>(f.search);
  return os.str();
}

class FaultySearch : public SearchBackend {
 public:
  explicit FaultySearch(const SearchFault& fault) : fault_(fault) {}
  std::vector<SearchPage> search(std::string_view, int page_limit) override {
    switch (fault_) {
      case SearchFault::NoHits:
        return {};
      case SearchFault::Error:
        throw Error(ErrorCode::TransportError, "search unreachable");
      case SearchFault::BlankPages:
        return {SearchPage{"https://example.org/blank", 1, "", "Blank", ""}};
      default:
        break;
    }
    std::vector<SearchPage> pages;
    for (int r = 1; r <= page_limit; ++r) {
      pages.push_back({"https://example.org/" + std::to_string(r), r,
                       "Wormrot played a celebrated set at Roadburn in 2015. The band later "
                       "toured Europe and Japan.",
                       "Page " + std::to_string(r), "snippet"});
    }
    return pages;
  }
  std::string describe() const override { return "faulty-search"; }

 private:
  const SearchFault& fault_;
};

class FaultyScorer : public RerankBackend {
 public:
  explicit FaultyScorer(const SearchFault& fault) : fault_(fault) {}
  std::vector<double> score(const RerankRequest& request) override {
    if (fault_ == SearchFault::RerankError) {
      throw Error(ErrorCode::TransportError, "reranker unreachable");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < request.passages.size(); ++i) out.push_back(1.0 / (1.0 + i));
    return out;
  }
  std::string describe() const override { return "faulty-scorer"; }

 private:
  const SearchFault& fault_;
};

struct Expected {
  std::vector<std::string> fallbacks;
  PipelineMode effective = PipelineMode::NoQuery;
  bool topic = false;
  bool directive = false;
  bool query = false;
  bool retrieval = false;
  bool grounded = false;
};

// Independent model of the ladder, written from the documented behaviour.
Expected model(const Faults& f) {
  Expected e;
  if (f.mode == PipelineMode::NoQuery) return e;
  if (f.topic == TopicFault::Error) {
    e.fallbacks.push_back("topic_error");
    return e;
  }
  e.topic = true;
  if (f.topic != TopicFault::Ok) {
    e.fallbacks.push_back("topic_absent");
    return e;
  }
  if (f.mode == PipelineMode::Guided) {
    if (f.directive == DirectiveFault::Ok) e.directive = true;
    if (f.directive == DirectiveFault::Empty) e.fallbacks.push_back("directive_empty");
    if (f.directive == DirectiveFault::Error) e.fallbacks.push_back("directive_error");
  }
  if (f.query == QueryFault::Empty || f.query == QueryFault::Error) {
    e.fallbacks.push_back("query_error");
    return e;
  }
  e.query = true;
  e.effective = e.directive ? PipelineMode::Guided : PipelineMode::Unguided;
  switch (f.search) {
    case SearchFault::Ok:
      e.retrieval = true;
      e.grounded = true;
      break;
    case SearchFault::NoHits:
    case SearchFault::BlankPages:
      e.retrieval = true;
      e.fallbacks.push_back("retrieval_empty");
      break;
    case SearchFault::Error:
    case SearchFault::RerankError:
      e.fallbacks.push_back("retrieval_error");
      break;
  }
  return e;
}

}  // namespace

std::vector<std::string> check_chunk_coverage(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> failures;
  for (std::size_t c = 0; c < cases; ++c) {
    const auto params = random_chunker(rng);
    SearchPage page{"https://example.org/p", 1, random_page_text(rng), "", ""};
    const auto& body = page.raw_content;
    const auto chunks = chunk_page(page, params);
    auto fail = [&](const std::string& what) {
      failures.push_back("case " + std::to_string(c) + " (" + describe(params, body.size()) +
                         "): " + what);
    };
    if (body.empty()) {
      if (!chunks.empty()) fail("chunks for an empty page");
      continue;
    }
    if (chunks.empty()) {
      fail("no chunks");
      continue;
    }
    // Reassemble: each chunk contributes the bytes past the previous end.
    std::string rebuilt;
    std::size_t covered = 0;
    bool ok = true;
    for (std::size_t i = 0; i < chunks.size() && ok; ++i) {
      const auto& ch = chunks[i];
      const auto span = ch.char_span;
      const bool last = i + 1 == chunks.size();
      if (span.start > covered) ok = false, fail("gap before chunk " + std::to_string(i));
      else if (span.end <= covered) ok = false, fail("chunk " + std::to_string(i) + " adds nothing");
      else if (i > 0 && span.start <= chunks[i - 1].char_span.start)
        ok = false, fail("chunk " + std::to_string(i) + " does not advance");
      else if (ch.text != body.substr(span.start, span.length()))
        ok = false, fail("chunk " + std::to_string(i) + " text differs from its span");
      else if (span.length() >
               params.target_chars + (params.target_chars - params.min_chars < 4 ? 3 : 0))
        ok = false, fail("chunk " + std::to_string(i) + " longer than target");
      else if (!last && span.length() < params.min_chars)
        ok = false, fail("chunk " + std::to_string(i) + " shorter than min");
      else if (!is_lead_byte(body, span.start) || !is_lead_byte(body, span.end))
        ok = false, fail("chunk " + std::to_string(i) + " splits a UTF-8 sequence");
      if (!ok) break;
      rebuilt += body.substr(covered, span.end - covered);
      covered = span.end;
    }
    if (ok && (covered != body.size() || rebuilt != body)) fail("reassembly differs from page");
  }
  return failures;
}

std::vector<std::string> check_selection_argmax(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> failures;
  for (std::size_t c = 0; c < cases; ++c) {
    std::vector<double> scores;
    const auto passages = random_passages(rng, scores);
    const auto got = select_passage(passages, scores);
    const auto want = reference_select(passages, scores);
    if (!got || *got != want) {
      failures.push_back("case " + std::to_string(c) + ": selected " +
                         (got ? std::to_string(*got) : "none") + ", expected " +
                         std::to_string(want));
      continue;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
      if (!std::isnan(s)) best = std::max(best, s);
    }
    const double picked = std::isnan(scores[*got]) ? -std::numeric_limits<double>::infinity()
                                                   : scores[*got];
    if (picked != best) failures.push_back("case " + std::to_string(c) + ": not the maximum");
  }
  if (select_passage(std::vector<Passage>{}, std::vector<double>{})) {
    failures.push_back("selection from no passages");
  }
  return failures;
}

std::vector<std::string> check_selection_permutation(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> failures;
  for (std::size_t c = 0; c < cases; ++c) {
    std::vector<double> scores;
    auto passages = random_passages(rng, scores);
    // Distinct (rank, start) keys except for exact duplicates keep the choice
    // well defined up to equal passages.
    const auto first = select_passage(passages, scores);
    const auto chosen = passages[*first];
    const double chosen_score = scores[*first];
    std::vector<std::size_t> perm(passages.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Passage> p2;
    std::vector<double> s2;
    for (auto i : perm) {
      p2.push_back(passages[i]);
      s2.push_back(scores[i]);
    }
    const auto second = select_passage(p2, s2);
    const auto& other = p2[*second];
    const bool same_key = other.page_rank == chosen.page_rank &&
                          other.char_span == chosen.char_span &&
                          (s2[*second] == chosen_score ||
                           (std::isnan(s2[*second]) && std::isnan(chosen_score)));
    if (!same_key) {
      failures.push_back("case " + std::to_string(c) + ": permutation changed the selection");
    }
  }
  return failures;
}

std::vector<std::string> check_fallback_ladder(std::size_t cases, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> failures;

  Faults faults{};
  const std::string user = "I love going to live music shows, not just metal.";
  auto hub = std::make_shared<BackendHub>();
  hub->add_chat(std::string(backend_ids::kTopic),
                std::make_shared<FnChat>([&](const ChatBackendRequest&) -> std::string {
                  switch (faults.topic) {
                    case TopicFault::Absent: return "NONE";
                    case TopicFault::Blank: return "  ";
                    case TopicFault::Error: throw Error(ErrorCode::TransportError, "topic down");
                    default: return "Wormrot (metal band)";
                  }
                }));
  hub->add_chat(std::string(backend_ids::kCosmo),
                std::make_shared<FnChat>([&](const ChatBackendRequest&) -> std::string {
                  switch (faults.directive) {
                    case DirectiveFault::Empty: return "";
                    case DirectiveFault::Error: throw Error(ErrorCode::ReplayMiss, "no record");
                    default: return "Yeah, live music is always a great experience.";
                  }
                }));
  hub->add_chat(std::string(backend_ids::kQuery),
                std::make_shared<FnChat>([&](const ChatBackendRequest&) -> std::string {
                  switch (faults.query) {
                    case QueryFault::Trivial: return user;
                    case QueryFault::Empty: return "\n";
                    case QueryFault::Error: throw Error(ErrorCode::TransportError, "query down");
                    default: return "What are some notable live performances by Wormrot?";
                  }
                }));
  hub->add_chat(std::string(backend_ids::kResponder),
                constant_chat("Wormrot played a celebrated set at Roadburn in 2015."));
  hub->set_search(std::make_shared<FaultySearch>(faults.search));
  hub->add_scorer(std::string(backend_ids::kReranker), std::make_shared<FaultyScorer>(faults.search));

  PipelineConfig config;
  config.record_timings = false;
  Pipeline pipeline(hub, default_templates(), config);
  const auto ctx = DialogContext::from_pairs(
      {{Speaker::Bot, "Wormrot is a metal band that is popular"}, {Speaker::User, user}});

  for (std::size_t c = 0; c < cases; ++c) {
    faults.mode = static_cast<PipelineMode>(pick(rng, 0, 2));
    faults.topic = static_cast<TopicFault>(pick(rng, 0, 3));
    faults.directive = static_cast<DirectiveFault>(pick(rng, 0, 2));
    faults.query = static_cast<QueryFault>(pick(rng, 0, 3));
    faults.search = static_cast<SearchFault>(pick(rng, 0, 4));
    const auto where = "case " + std::to_string(c) + " (" + describe(faults) + "): ";
    TurnTrace trace;
    try {
      trace = pipeline.run_turn(ctx, "ladder", faults.mode);
    } catch (const std::exception& e) {
      failures.push_back(where + "turn errored: " + e.what());
      continue;
    }
    const auto want = model(faults);
    std::vector<std::string> problems;
    if (trace.response.text.empty()) problems.push_back("empty reply");
    if (trace.query && !trace.topic) problems.push_back("query without topic");
    if (trace.directive && !trace.topic) problems.push_back("directive without topic");
    if (trace.retrieval && !trace.query) problems.push_back("retrieval without query");
    if (trace.response.grounded != trace.response.passage_used.has_value()) {
      problems.push_back("grounded flag disagrees with passage");
    }
    if (trace.flags.fallbacks != want.fallbacks) problems.push_back("fallbacks differ");
    if (trace.effective_mode != want.effective) problems.push_back("effective mode differs");
    if (trace.topic.has_value() != want.topic) problems.push_back("topic presence differs");
    if (trace.directive.has_value() != want.directive) problems.push_back("directive presence differs");
    if (trace.query.has_value() != want.query) problems.push_back("query presence differs");
    if (trace.retrieval.has_value() != want.retrieval) problems.push_back("retrieval presence differs");
    if (trace.response.grounded != want.grounded) problems.push_back("grounding differs");
    if (trace.query && (faults.query == QueryFault::Trivial) != trace.flags.trivial_query) {
      problems.push_back("trivial flag differs");
    }
    if (trace.query && trace.query->directive_used.has_value() != want.directive) {
      problems.push_back("query directive differs");
    }
    try {
      trace.validate();
      if (trace_from_jsonl_line(to_jsonl_line(trace)) != trace) problems.push_back("trace round trip");
    } catch (const std::exception& e) {
      problems.push_back(std::string("invalid trace: ") + e.what());
    }
    for (const auto& p : problems) failures.push_back(where + p);
  }
  return failures;
}

}  // namespace dsq::testkit
