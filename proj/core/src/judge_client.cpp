#include "steerbench/evalbench.hpp"

#include <atomic>
#include <cstdlib>
#include <regex>
#include <semaphore>

#include <httplib.h>
#include <json.hpp>

namespace steerbench {

namespace {

constexpr const char* kJudgeTemplate =
    "You are an impartial judge evaluating multilingual responses from a language steering "
    "experiment. A question was asked in {source_language}, and the model was steered to respond "
    "in {target_language}.\n"
    "\n"
    "Important: Do NOT evaluate which language the response is in or whether steering succeeded. "
    "Ignore the target language entirely for scoring—evaluate the final response solely on "
    "its content, regardless of the language used.\n"
    "\n"
    "Evaluation Criteria:\n"
    "(1) Relevance: Is the response a relevant answer to the question?\n"
    "(2) Coherence: Is the response coherent text, or is it gibberish, repetitive, or useless?\n"
    "\n"
    "Scoring Rubric:\n"
    "- 0: Completely unrelated or gibberish/useless text.\n"
    "- 1: Somewhat related but incomplete, partially off-target, or minimally useful.\n"
    "- 2: Clearly related to the question, coherent, and useful text.\n"
    "\n"
    "Question: {question}\n"
    "\n"
    "Response: {response}\n"
    "\n"
    "Output format: Rating: [[score]]";

std::string replace_all(std::string text, const std::string& what, const std::string& with) {
    std::size_t pos = 0;
    while ((pos = text.find(what, pos)) != std::string::npos) {
        text.replace(pos, what.size(), with);
        pos += with.size();
    }
    return text;
}

}  // namespace

std::string render_judge_prompt(const std::string& source_language,
                                const std::string& target_language, const std::string& question,
                                const std::string& response) {
    std::string out = kJudgeTemplate;
    out = replace_all(out, "{source_language}", source_language);
    out = replace_all(out, "{target_language}", target_language);
    out = replace_all(out, "{question}", question);
    out = replace_all(out, "{response}", response);
    return out;
}

std::optional<int> parse_judge_reply(const std::string& reply) {
    static const std::regex re(R"(Rating:\s*\[\[\s*([0-2])\s*\]\])");
    std::smatch m;
    if (!std::regex_search(reply, m, re)) return std::nullopt;
    return m[1].str()[0] - '0';
}

struct ExternalJudgeClient::Impl {
    JudgeClientConfig config;
    std::string token;
    std::counting_semaphore<1 << 20> window;
    std::atomic<std::size_t> judged{0};
    std::atomic<std::size_t> parse_failures{0};
    std::atomic<std::size_t> transport_failures{0};

    explicit Impl(JudgeClientConfig cfg)
        : config(std::move(cfg)), window(std::max(1, config.max_in_flight)) {
        if (const char* t = std::getenv(config.auth_env_var.c_str())) token = t;
    }
};

ExternalJudgeClient::ExternalJudgeClient(JudgeClientConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {
    if (impl_->config.base_url.empty()) throw ConfigError("judge client needs a base_url");
}

ExternalJudgeClient::~ExternalJudgeClient() = default;

int ExternalJudgeClient::score(const std::string& question, const std::string& answer,
                               const LanguageId& source, const LanguageId& target) {
    const std::string prompt = render_judge_prompt(source, target, question, answer);
    nlohmann::json body;
    body["model"] = impl_->config.model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    const std::string payload = body.dump();

    impl_->window.acquire();
    std::string reply;
    bool got_reply = false;
    for (int attempt = 0; attempt <= impl_->config.retries && !got_reply; ++attempt) {
        httplib::Client cli(impl_->config.base_url);
        cli.set_connection_timeout(impl_->config.timeout_seconds, 0);
        cli.set_read_timeout(impl_->config.timeout_seconds, 0);
        httplib::Headers headers;
        if (!impl_->token.empty()) headers.emplace("Authorization", "Bearer " + impl_->token);
        auto res = cli.Post(impl_->config.endpoint, headers, payload, "application/json");
        if (res && res->status == 200) {
            reply = res->body;
            got_reply = true;
        }
    }
    impl_->window.release();

    if (!got_reply) {
        impl_->transport_failures.fetch_add(1);
        return 0;
    }
    std::optional<int> rating;
    try {
        const auto j = nlohmann::json::parse(reply);
        const auto content =
            j.at("choices").at(0).at("message").at("content").get<std::string>();
        rating = parse_judge_reply(content);
    } catch (const std::exception&) {
        rating = std::nullopt;
    }
    if (!rating) {
        impl_->parse_failures.fetch_add(1);
        return 0;
    }
    impl_->judged.fetch_add(1);
    return *rating;
}

std::size_t ExternalJudgeClient::parse_failures() const { return impl_->parse_failures.load(); }
std::size_t ExternalJudgeClient::transport_failures() const {
    return impl_->transport_failures.load();
}
std::size_t ExternalJudgeClient::failure_count() const {
    return impl_->parse_failures.load() + impl_->transport_failures.load();
}
std::size_t ExternalJudgeClient::judged_count() const { return impl_->judged.load(); }

}  // namespace steerbench
