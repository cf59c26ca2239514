#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <memory>
#include <thread>
#include <vector>

#include "detox/service.hpp"

using namespace detox;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

const fs::path kData = fs::path(DETOX_SOURCE_DIR) / "data";
const fs::path kVocab = fs::path(DETOX_SOURCE_DIR) / "tests/fixtures/vocab_en.csv";

std::string term_response(bool hateful, const std::string& explanation = "term explanation") {
    return "<STEP_1> meaning </STEP_1>\n<STEP_2> applicability </STEP_2>\n"
           "<STEP_3> " + std::string(hateful ? "Hateful" : "Non hateful") + " </STEP_3>\n"
           "<STEP_4> " + explanation + " </STEP_4>";
}

std::string free_response(bool hateful, const std::string& explanation = "free explanation") {
    return "<DECISION> " + std::string(hateful ? "Hate speech" : "Not hate speech") +
           " </DECISION>\n<EXPLANATION> " + explanation + " </EXPLANATION>";
}

Engine make_engine(std::shared_ptr<ChatProvider> provider) {
    Engine engine;
    engine.config.language = "en";
    engine.config.data_dir = kData.string();
    engine.config.vocabulary_path = kVocab.string();
    engine.lemmatizer = default_lemmatizer("en", kData);
    engine.provider = std::move(provider);
    engine.prompts = load_prompt_set("en", kData);
    engine.vocabulary = load_vocabulary(kVocab, "en");
    engine.vocabulary.build_index(*engine.lemmatizer);
    return engine;
}

std::shared_ptr<ScriptedProvider> clean_provider() {
    return ScriptedProvider::keyed_with_fallback(
        {{"Term:", term_response(false)}, {"Text for analysis:", free_response(false)}}, "");
}

std::shared_ptr<ScriptedProvider> hateful_provider() {
    return ScriptedProvider::keyed_with_fallback(
        {{"Term:", term_response(true, "term view")},
         {"Please merge", "merged explanation"},
         {"Text for analysis:", free_response(true, "free view")}},
        "");
}

/// Serves one DetectionService on an ephemeral loopback port.
struct Harness {
    explicit Harness(DetectionService& service) : service_(service) {
        port_ = service_.http().bind_to_any_port("127.0.0.1");
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { service_.http().listen_after_bind(); });
        service_.http().wait_until_ready();
    }
    ~Harness() {
        service_.http().stop();
        thread_.join();
    }
    httplib::Client client() { return httplib::Client("127.0.0.1", port_); }

    DetectionService& service_;
    int port_ = 0;
    std::thread thread_;
};

json parse_body(const httplib::Result& res) {
    REQUIRE(res);
    return json::parse(res->body);
}

}  // namespace

TEST_CASE("health reports starting then ok") {
    DetectionService service;
    Harness harness(service);
    auto client = harness.client();

    auto res = client.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 503);
    CHECK(parse_body(res)["status"] == "starting");

    service.attach(make_engine(clean_provider()));
    res = client.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = parse_body(res);
    CHECK(body["status"] == "ok");
    CHECK(body["vocabulary_size"] == 5);
    CHECK(body["provider"] == "scripted");
}

TEST_CASE("detect and match answer 503 before the engine is attached") {
    DetectionService service;
    Harness harness(service);
    auto client = harness.client();
    auto res = client.Post("/v1/detect", R"({"text":"hi"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 503);
    res = client.Post("/v1/match", R"({"text":"hi"})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 503);
}

TEST_CASE("match returns spans and categories without model calls") {
    auto provider = clean_provider();
    DetectionService service(make_engine(provider));
    Harness harness(service);
    auto client = harness.client();

    auto res = client.Post("/v1/match", R"({"text":"She called her a welfare queen today."})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = parse_body(res);
    REQUIRE(body["matches"].size() == 1);
    const auto& match = body["matches"][0];
    CHECK(match["term"] == "welfare queen");
    CHECK(match["surface"] == "welfare queen");
    CHECK(match["start"] == 17);
    CHECK(match["end"] == 30);
    CHECK(match["categories"] == json::array({"Race", "Socioeconomic Status"}));
    CHECK(provider->call_count() == 0);

    res = client.Post("/v1/match", R"({"text":"nothing flagged here"})", "application/json");
    CHECK(parse_body(res)["matches"].empty());
}

TEST_CASE("detect runs both pipelines and reports agreement") {
    DetectionService service(make_engine(clean_provider()));
    Harness harness(service);
    auto client = harness.client();

    auto res = client.Post("/v1/detect", R"({"id":"t1","text":"That sissy ruined it."})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = parse_body(res);
    CHECK(body["id"] == "t1");
    CHECK(body["label"] == false);
    CHECK(body["provenance"] == "none");
    REQUIRE(body["matches"].size() == 1);
    CHECK(body["matches"][0]["term"] == "sissy");
    CHECK(body["matches"][0]["hateful"] == false);
}

TEST_CASE("detect fuses explanations when both pipelines flag") {
    DetectionService service(make_engine(hateful_provider()));
    Harness harness(service);
    auto client = harness.client();

    auto res = client.Post("/v1/detect", R"({"id":"t2","text":"Those sissy men disgust me."})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    auto body = parse_body(res);
    CHECK(body["label"] == true);
    CHECK(body["provenance"] == "both_fused");
    CHECK(body["explanation"] == "merged explanation");
}

TEST_CASE("service record is byte-identical to a direct engine run") {
    auto engine = make_engine(hateful_provider());
    std::string expected =
        result_to_json(detect("Those sissy men disgust me.", "t2", engine.deps()),
                       engine.vocabulary)
            .dump();

    DetectionService service(make_engine(hateful_provider()));
    Harness harness(service);
    auto client = harness.client();
    auto res = client.Post("/v1/detect", R"({"id":"t2","text":"Those sissy men disgust me."})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->body == expected);

    // restart with the same assets reproduces the bytes
    DetectionService second(make_engine(hateful_provider()));
    Harness harness2(second);
    auto client2 = harness2.client();
    auto res2 = client2.Post("/v1/detect", R"({"id":"t2","text":"Those sissy men disgust me."})",
                             "application/json");
    REQUIRE(res2);
    CHECK(res2->body == res->body);
}

TEST_CASE("malformed bodies are rejected with 400") {
    DetectionService service(make_engine(clean_provider()));
    Harness harness(service);
    auto client = harness.client();
    for (const char* endpoint : {"/v1/detect", "/v1/match"}) {
        auto res = client.Post(endpoint, "not json at all", "application/json");
        REQUIRE(res);
        CHECK(res->status == 400);
        res = client.Post(endpoint, R"(["array"])", "application/json");
        CHECK(res->status == 400);
        res = client.Post(endpoint, R"({"no_text":1})", "application/json");
        CHECK(res->status == 400);
        res = client.Post(endpoint, R"({"text":42})", "application/json");
        CHECK(res->status == 400);
        res = client.Post(endpoint, R"({"text":"ok","language":7})", "application/json");
        CHECK(res->status == 400);
    }
}

TEST_CASE("language checks answer 422") {
    DetectionService service(make_engine(clean_provider()));
    Harness harness(service);
    auto client = harness.client();
    auto res = client.Post("/v1/detect", R"({"text":"hallo","language":"de"})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 422);
    CHECK(parse_body(res)["error"].get<std::string>().find("unsupported") != std::string::npos);

    // supported language, but not the one this service loaded
    res = client.Post("/v1/detect", R"({"text":"bonjour","language":"fr"})",
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 422);
    res = client.Post("/v1/match", R"({"text":"bonjour","language":"fr"})", "application/json");
    CHECK(res->status == 422);

    // the loaded language is accepted explicitly
    res = client.Post("/v1/match", R"({"text":"fine","language":"en"})", "application/json");
    CHECK(res->status == 200);
}

TEST_CASE("provider failure on both pipelines becomes 502 with diagnostics") {
    // empty sequence: every model call throws ScriptExhausted
    DetectionService service(make_engine(ScriptedProvider::sequence({})));
    Harness harness(service);
    auto client = harness.client();
    auto res = client.Post("/v1/detect", R"({"text":"That sissy again."})",
                           "application/json");
    REQUIRE(res);
    CHECK(res->status == 502);
    auto body = parse_body(res);
    CHECK(body["label"] == false);
    CHECK_FALSE(body["errors"].empty());
}

TEST_CASE("concurrent detect requests all succeed") {
    DetectionService service(make_engine(clean_provider()));
    Harness harness(service);
    std::vector<std::thread> workers;
    std::vector<int> statuses(6, 0);
    for (int i = 0; i < 6; ++i)
        workers.emplace_back([&, i] {
            auto client = harness.client();
            auto res = client.Post("/v1/detect",
                                   R"({"id":"c","text":"That sissy ruined it."})",
                                   "application/json");
            if (res) statuses[i] = res->status;
        });
    for (auto& w : workers) w.join();
    for (int status : statuses) CHECK(status == 200);
}
