#include "dsq/pipeline.hpp"

#include <spdlog/spdlog.h>

#include "dsq/error.hpp"

namespace dsq {

namespace {

std::shared_ptr<const PromptTemplates> load_templates(const PipelineConfig& config) {
  auto templates = config.template_dir.empty()
                       ? PromptTemplates::load_default(config.template_version)
                       : PromptTemplates::load(config.template_dir, config.template_version);
  return std::make_shared<const PromptTemplates>(std::move(templates));
}

std::string error_note(std::string_view stage, const std::exception& e) {
  return std::string(stage) + ": " + e.what();
}

}  // namespace

Pipeline::Pipeline(std::shared_ptr<const BackendHub> hub,
                   std::shared_ptr<const PromptTemplates> templates, PipelineConfig config)
    : hub_(std::move(hub)),
      templates_(std::move(templates)),
      config_(std::move(config)),
      topic_(hub_, templates_, config_.tags, config_.stage_params("topic")),
      directive_(hub_, templates_, config_.tags, config_.stage_params("directive")),
      query_(hub_, templates_, config_.tags, config_.stage_params("query")),
      retriever_(hub_, config_.retrieval),
      responder_(hub_, templates_, config_.tags, config_.stage_params("response")),
      clock_([] { return std::chrono::steady_clock::now(); }) {
  config_.validate();
}

Pipeline Pipeline::from_config(const PipelineConfig& config, std::shared_ptr<HttpClient> http) {
  return Pipeline(build_backend_hub(config, std::move(http)), load_templates(config), config);
}

TurnTrace Pipeline::run_turn(const DialogContext& input, const std::string& session_id,
                             std::optional<PipelineMode> mode) const {
  if (input.empty() || input.turns().back().speaker != Speaker::User) {
    throw Error(ErrorCode::InvalidArgument, "context must end with a user turn");
  }
  const DialogContext ctx = input.with_window(config_.window_limit);

  TurnTrace trace;
  trace.session_id = session_id;
  trace.turn_index = ctx.turns().back().index;
  trace.mode = mode.value_or(config_.mode);
  trace.effective_mode = PipelineMode::NoQuery;
  trace.user_text = ctx.turns().back().text;
  trace.template_version = templates_->version();

  auto timed = [&](std::string_view name, auto&& fn) {
    if (hook_) hook_(name);
    const auto start = clock_();
    struct Record {
      const Pipeline* self;
      TurnTrace* trace;
      std::string_view name;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        if (!self->config_.record_timings) return;
        const std::chrono::duration<double, std::milli> elapsed = self->clock_() - start;
        trace->timings_ms[std::string(name)] = elapsed.count();
      }
    } record{this, &trace, name, start};
    return fn();
  };
  auto note_stage = [&](std::string_view name, std::string_view backend,
                        const GenerationParams* params) {
    trace.backends[std::string(name)] =
        std::string(backend) + " (" +
        (hub_->has_chat(backend) ? hub_->describe_chat(backend) : "unregistered") + ")";
    if (params) trace.params[std::string(name)] = *params;
  };
  auto fall_back = [&](std::string_view reason, std::string_view stage_name,
                       const std::exception* e) {
    trace.flags.fallbacks.emplace_back(reason);
    if (e) {
      trace.flags.errors.push_back(error_note(stage_name, *e));
      spdlog::warn("session {} turn {}: {} ({})", session_id, trace.turn_index, reason, e->what());
    }
  };

  const RetrievalOutcome* grounding = nullptr;

  if (trace.mode != PipelineMode::NoQuery) {
    note_stage(stage::kTopic, backend_ids::kTopic, &topic_.params());
    std::optional<TopicResult> topic;
    try {
      topic = timed(stage::kTopic, [&] { return topic_.track(ctx); });
    } catch (const Error& e) {
      fall_back(fallback::kTopicError, stage::kTopic, &e);
    }
    if (topic) {
      trace.topic = *topic;
      if (!topic->present) fall_back(fallback::kTopicAbsent, stage::kTopic, nullptr);
    }

    if (topic && topic->present) {
      std::optional<Directive> directive;
      if (trace.mode == PipelineMode::Guided) {
        note_stage(stage::kDirective, backend_ids::kCosmo, &directive_.params());
        try {
          directive = timed(stage::kDirective, [&] { return directive_.generate(ctx, *topic); });
          trace.directive = *directive;
        } catch (const Error& e) {
          fall_back(e.code() == ErrorCode::EmptyDirective ? fallback::kDirectiveEmpty
                                                          : fallback::kDirectiveError,
                    stage::kDirective, &e);
        }
      }

      const QueryMode qmode = directive ? QueryMode::Guided : QueryMode::Unguided;
      note_stage(stage::kQuery, backend_ids::kQuery, &query_.params());
      try {
        trace.query = timed(stage::kQuery, [&] {
          return query_.generate(ctx, *topic, directive ? &*directive : nullptr, qmode);
        });
        trace.effective_mode = directive ? PipelineMode::Guided : PipelineMode::Unguided;
        trace.flags.trivial_retry = trace.query->trivial_retry;
        trace.flags.trivial_query = trace.query->trivial;
        trace.flags.instruction_mismatch = trace.query->instruction_mismatch;
      } catch (const Error& e) {
        fall_back(fallback::kQueryError, stage::kQuery, &e);
      }
    }

    if (trace.query) {
      trace.backends[std::string(stage::kRetrieval)] =
          hub_->has_scorer(backend_ids::kReranker) ? std::string(backend_ids::kReranker) : "";
      try {
        trace.retrieval =
            timed(stage::kRetrieval, [&] { return retriever_.retrieve(trace.query->text); });
        if (trace.retrieval->selected) {
          grounding = &*trace.retrieval;
        } else {
          fall_back(fallback::kRetrievalEmpty, stage::kRetrieval, nullptr);
        }
      } catch (const Error& e) {
        fall_back(fallback::kRetrievalError, stage::kRetrieval, &e);
      }
    }
  }

  note_stage(stage::kResponse, backend_ids::kResponder, &responder_.params());
  trace.response = timed(stage::kResponse, [&] { return responder_.respond(ctx, grounding); });
  trace.validate();
  return trace;
}

std::vector<TurnTrace> replay_conversation(const Conversation& conversation,
                                           const Pipeline& pipeline,
                                           const ReplayOptions& options) {
  const auto& turns = conversation.turns;
  std::vector<bool> is_target(turns.size(), false);
  if (conversation.target_turns.empty()) {
    for (std::size_t i = 0; i < turns.size(); ++i) is_target[i] = turns[i].speaker == Speaker::User;
  } else {
    for (auto i : conversation.target_turns) {
      if (i >= turns.size() || turns[i].speaker != Speaker::User) {
        throw Error(ErrorCode::InvalidArgument,
                    "target turn " + std::to_string(i) + " is not a user turn");
      }
      is_target[i] = true;
    }
  }

  const std::string session_id =
      options.session_id.empty() ? conversation.id : options.session_id;
  std::vector<TurnTrace> traces;
  DialogContext ctx({}, pipeline.config().window_limit);
  bool skip_next_bot = false;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& turn = turns[i];
    if (turn.speaker == Speaker::Bot && skip_next_bot) {
      skip_next_bot = false;
      continue;
    }
    skip_next_bot = false;
    ctx = ctx.with_turn(turn.speaker, turn.text);
    if (!is_target[i]) continue;

    traces.push_back(pipeline.run_turn(ctx, session_id, options.mode));
    if (!options.use_gold_context) {
      ctx = ctx.with_turn(Speaker::Bot, traces.back().response.text);
      skip_next_bot = true;
    }
  }
  return traces;
}

}  // namespace dsq
