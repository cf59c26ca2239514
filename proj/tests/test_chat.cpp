#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/chat.hpp"

using namespace detox;

namespace {

ChatRequest make_request(const std::string& user = "hello") {
    ChatRequest r;
    r.system_prompt = "system text";
    r.user_prompt = user;
    r.model_id = "test-model";
    return r;
}

// Runs an httplib server on an ephemeral port for the lifetime of the test.
class MockServer {
public:
    explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string ok_body(const std::string& text) {
    nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
    return body.dump();
}

}  // namespace

TEST_CASE("request validation") {
    auto p = ScriptedProvider::sequence({"ok"});
    ChatRequest bad = make_request();
    bad.system_prompt = "";
    CHECK_THROWS_AS(p->complete(bad), Error);
    bad = make_request();
    bad.temperature = 1.5;
    CHECK_THROWS_AS(p->complete(bad), Error);
}

TEST_CASE("sequence script serves in order then exhausts") {
    auto p = ScriptedProvider::sequence({"one", "two"});
    CHECK(p->complete(make_request("a")) == "one");
    CHECK(p->complete(make_request("b")) == "two");
    CHECK_THROWS_AS(p->complete(make_request("c")), ScriptExhaustedError);
    auto log = p->requests();
    REQUIRE(log.size() == 3);
    CHECK(log[0].user_prompt == "a");
    CHECK(log[1].user_prompt == "b");
    CHECK(log[2].user_prompt == "c");
}

TEST_CASE("keyed script matches on request content") {
    auto p = ScriptedProvider::keyed_with_fallback(
        {{"sissy", "about sissy"}, {"bitch", "about bitch"}}, "default answer");
    CHECK(p->complete(make_request("Term: sissy")) == "about sissy");
    CHECK(p->complete(make_request("Term: bitch")) == "about bitch");
    CHECK(p->complete(make_request("nothing known")) == "default answer");
}

TEST_CASE("keyed script without fallback exhausts on miss") {
    auto p = ScriptedProvider::keyed({{"sissy", "x"}});
    CHECK_THROWS_AS(p->complete(make_request("unknown")), ScriptExhaustedError);
}

TEST_CASE("empty scripted response is a malformed-provider error") {
    auto p = ScriptedProvider::sequence({""});
    try {
        p->complete(make_request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& ex) {
        CHECK(ex.kind == ProviderErrorKind::malformed);
    }
}

TEST_CASE("http provider round trip carries model and both roles") {
    nlohmann::json seen;
    MockServer server([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(ok_body("the answer"), "application/json");
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.api_key = "sekrit";
    HttpProvider provider(cfg);
    auto response = provider.complete(make_request("user text"));
    CHECK(response == "the answer");
    CHECK(seen["model"] == "test-model");
    REQUIRE(seen["messages"].size() == 2);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][0]["content"] == "system text");
    CHECK(seen["messages"][1]["role"] == "user");
    CHECK(seen["messages"][1]["content"] == "user text");
    CHECK(seen["temperature"] == 0.0);
    CHECK(seen.contains("max_tokens"));
}

TEST_CASE("http provider sends bearer credentials") {
    std::string auth_header;
    MockServer server([&](const httplib::Request& req, httplib::Response& res) {
        auth_header = req.get_header_value("Authorization");
        res.set_content(ok_body("x"), "application/json");
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.api_key = "key-123";
    HttpProvider provider(cfg);
    provider.complete(make_request());
    CHECK(auth_header == "Bearer key-123");
}

TEST_CASE("429 then 200 retries once and succeeds") {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        if (calls.fetch_add(1) == 0) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
        } else {
            res.set_content(ok_body("after retry"), "application/json");
        }
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.initial_backoff_ms = 1;
    HttpProvider provider(cfg);
    CHECK(provider.complete(make_request()) == "after retry");
    CHECK(calls.load() == 2);
}

TEST_CASE("rate limit that never clears surfaces as rate_limit") {
    MockServer server([](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.max_retries = 1;
    cfg.initial_backoff_ms = 1;
    HttpProvider provider(cfg);
    try {
        provider.complete(make_request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& ex) {
        CHECK(ex.kind == ProviderErrorKind::rate_limit);
    }
}

TEST_CASE("auth failures do not retry") {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        calls.fetch_add(1);
        res.status = 401;
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    HttpProvider provider(cfg);
    try {
        provider.complete(make_request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& ex) {
        CHECK(ex.kind == ProviderErrorKind::auth);
    }
    CHECK(calls.load() == 1);
}

TEST_CASE("malformed bodies are reported") {
    MockServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json at all", "text/plain");
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    HttpProvider provider(cfg);
    try {
        provider.complete(make_request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& ex) {
        CHECK(ex.kind == ProviderErrorKind::malformed);
    }
}

TEST_CASE("missing response path is malformed") {
    MockServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"message":{}}]})", "application/json");
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    HttpProvider provider(cfg);
    CHECK_THROWS_AS(provider.complete(make_request()), ProviderError);
}

TEST_CASE("custom response path") {
    MockServer server([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"output":{"text":"custom"}})", "application/json");
    });
    HttpProviderConfig cfg;
    cfg.endpoint = server.endpoint();
    cfg.response_path = "output.text";
    HttpProvider provider(cfg);
    CHECK(provider.complete(make_request()) == "custom");
}

TEST_CASE("unreachable endpoint is a network error") {
    HttpProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:9/v1/chat/completions";  // discard port, nothing listens
    cfg.max_retries = 0;
    cfg.timeout_s = 2;
    HttpProvider provider(cfg);
    try {
        provider.complete(make_request());
        FAIL("expected ProviderError");
    } catch (const ProviderError& ex) {
        CHECK(ex.kind == ProviderErrorKind::network);
    } catch (const TimeoutError&) {
        SUCCEED("timeout is acceptable for an unroutable endpoint");
    }
}

TEST_CASE("audit log captures calls and errors") {
    auto path = std::filesystem::temp_directory_path() / "audit_test.jsonl";
    std::filesystem::remove(path);
    {
        auto inner = ScriptedProvider::sequence({"fine"});
        AuditingProvider audited(inner, path);
        CHECK(audited.complete(make_request("first")) == "fine");
        CHECK_THROWS_AS(audited.complete(make_request("second")), ScriptExhaustedError);
    }
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::vector<nlohmann::json> records;
    while (std::getline(in, line)) records.push_back(nlohmann::json::parse(line));
    REQUIRE(records.size() == 2);
    CHECK(records[0]["response"] == "fine");
    CHECK(records[0]["model"] == "test-model");
    CHECK(records[0].contains("latency_ms"));
    CHECK(records[0].contains("request_hash"));
    CHECK(records[1].contains("error"));
    CHECK_FALSE(records[1].contains("response"));
    std::filesystem::remove(path);
}

TEST_CASE("scripted provider is callable from multiple threads") {
    std::vector<std::string> responses(64, "r");
    auto p = ScriptedProvider::sequence(responses);
    std::vector<std::thread> workers;
    std::atomic<int> ok{0};
    for (int t = 0; t < 8; ++t)
        workers.emplace_back([&] {
            for (int i = 0; i < 8; ++i)
                if (p->complete(make_request()) == "r") ok.fetch_add(1);
        });
    for (auto& w : workers) w.join();
    CHECK(ok.load() == 64);
    CHECK(p->call_count() == 64);
}
