#include "support.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "dsq/error.hpp"
#include "dsq/pipeline.hpp"
#include "dsq/woi.hpp"

namespace dsq::testkit {

std::filesystem::path fixture_dir() { return DSQ_FIXTURE_DIR; }

std::filesystem::path fixture(const std::string& relative) { return fixture_dir() / relative; }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("dsq-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

RecordingHttpClient::RecordingHttpClient(Handler handler) : handler_(std::move(handler)) {}

HttpResponse RecordingHttpClient::send(const HttpRequest& request) {
  ++calls_;
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
  }
  if (!handler_) throw Error(ErrorCode::TransportError, "network disabled in tests: " + request.url);
  return handler_(request);
}

std::vector<HttpRequest> RecordingHttpClient::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

FnChat::FnChat(Fn fn, std::string label) : fn_(std::move(fn)), label_(std::move(label)) {}

std::string FnChat::complete(const ChatBackendRequest& request) {
  ++calls_;
  return fn_(request);
}

std::shared_ptr<FnChat> constant_chat(std::string reply) {
  return std::make_shared<FnChat>([reply](const ChatBackendRequest&) { return reply; });
}

std::shared_ptr<const PromptTemplates> default_templates() {
  static const auto templates =
      std::make_shared<const PromptTemplates>(PromptTemplates::load(DSQ_ASSET_DIR_FOR_TESTS));
  return templates;
}

PipelineConfig fixture_config(const std::string& relative,
                              const std::filesystem::path& store_override) {
  auto config = PipelineConfig::from_file(fixture(relative));
  if (!store_override.empty()) config.replay_store = store_override.string();
  config.template_dir = DSQ_ASSET_DIR_FOR_TESTS;
  return config;
}

std::vector<std::pair<std::string, std::filesystem::path>> record_fixture_stores(
    const std::filesystem::path& out_dir) {
  const auto manifest = nlohmann::json::parse(read_file(fixture("replay/manifest.json")));
  std::vector<std::pair<std::string, std::filesystem::path>> written;
  auto no_network = std::make_shared<RecordingHttpClient>();

  {
    const auto& m = manifest.at("pipeline");
    const auto store_name = m.at("store").get<std::string>();
    const auto out = out_dir / std::filesystem::path(store_name).filename();
    std::filesystem::remove(out);
    const auto config = fixture_config(m.at("config").get<std::string>(), out);
    const auto pipeline = Pipeline::from_config(config, no_network);
    for (const auto& run : m.at("runs")) {
      ReplayOptions options;
      options.mode = pipeline_mode_from_string(run.at("mode").get<std::string>());
      options.use_gold_context = run.at("gold_context").get<bool>();
      for (const auto& conv : load_conversations(fixture(run.at("input").get<std::string>()))) {
        replay_conversation(conv, pipeline, options);
      }
    }
    written.emplace_back(store_name, out);
  }
  {
    const auto& m = manifest.at("finetune");
    const auto store_name = m.at("store").get<std::string>();
    const auto out = out_dir / std::filesystem::path(store_name).filename();
    std::filesystem::remove(out);
    const auto config = fixture_config(m.at("config").get<std::string>(), out);
    const auto hub = build_backend_hub(config, no_network);
    woi::FinetuneOptions options;
    options.sample_size = m.at("n").get<std::size_t>();
    options.seed = m.at("seed").get<std::uint64_t>();
    options.parallelism = 1;
    const auto turns =
        woi::select_search_turns(woi::ingest(fixture(m.at("woi").get<std::string>())));
    woi::build_finetune_set(turns, hub, default_templates(), options);
    written.emplace_back(store_name, out);
  }
  if (no_network->calls() != 0) {
    throw Error(ErrorCode::TransportError, "fixture recording touched the network");
  }
  return written;
}

}  // namespace dsq::testkit
