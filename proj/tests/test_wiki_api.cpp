#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "detox/wiki_api.hpp"

using namespace detox;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::path(DETOX_BINARY_DIR) / "wiki_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// MediaWiki API stub on an ephemeral port. Records every request's params.
class MockWiki {
public:
    using Handler = std::function<json(const httplib::Request&)>;

    explicit MockWiki(Handler handler) : handler_(std::move(handler)) {
        server_.Get("/w/api.php", [this](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard<std::mutex> lock(mutex_);
                requests_.push_back(req.params);
            }
            json body = handler_(req);
            if (body.contains("__status")) {
                res.status = body["__status"].get<int>();
                res.set_content(body.value("__body", std::string("error")), "text/plain");
                return;
            }
            res.set_content(body.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockWiki() {
        server_.stop();
        thread_.join();
    }

    std::string api_base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/w/api.php"; }
    std::vector<httplib::Params> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    mutable std::mutex mutex_;
    mutable std::vector<httplib::Params> requests_;
};

std::string param(const httplib::Params& params, const std::string& key) {
    auto it = params.find(key);
    return it == params.end() ? std::string() : it->second;
}

WikiClient make_client(const MockWiki& wiki, const fs::path& cache_dir) {
    WikiClientConfig cfg;
    cfg.api_base = wiki.api_base();
    cfg.language = "en";
    cfg.cache_dir = cache_dir;
    cfg.max_retries = 0;
    return WikiClient(cfg);
}

json member(long long id, const std::string& title, int ns = 0) {
    return {{"pageid", id}, {"ns", ns}, {"title", title}};
}

}  // namespace

TEST_CASE("source list files parse and validate") {
    auto dir = fresh_dir("sources");
    fs::create_directories(dir / "sources");
    {
        std::ofstream out(dir / "sources" / "en.txt", std::ios::binary);
        out << "# comment line\n";
        out << "category\tCategory:English swear words\n";
        out << "tag\tderogatory\n";
    }
    auto sources = load_sources("en", dir);
    REQUIRE(sources.size() == 2);
    CHECK(sources[0].kind == CategorySource::Kind::category);
    CHECK(sources[0].title == "Category:English swear words");
    CHECK(sources[1].kind == CategorySource::Kind::tag);
    CHECK(sources[1].title == "derogatory");

    {
        std::ofstream out(dir / "sources" / "fr.txt", std::ios::binary);
        out << "category\tCategory:wrong prefix\n";
    }
    CHECK_THROWS_AS(load_sources("fr", dir), FormatError);
    {
        std::ofstream out(dir / "sources" / "el.txt", std::ios::binary);
        out << "listing\tΚατηγορία:x\n";
    }
    CHECK_THROWS_AS(load_sources("el", dir), FormatError);
    CHECK_THROWS_AS(load_sources("de", dir), UnsupportedLanguageError);
}

TEST_CASE("shipped source lists load for every language") {
    auto data = fs::path(DETOX_SOURCE_DIR) / "data";
    for (const std::string lang : {"en", "fr", "el"}) {
        auto sources = load_sources(lang, data);
        CHECK(!sources.empty());
        for (const auto& s : sources) CHECK(s.language == lang);
    }
    // The Greek list mixes category listings with bare inflection tags.
    auto el = load_sources("el", data);
    bool has_category = false, has_tag = false;
    for (const auto& s : el) {
        has_category |= s.kind == CategorySource::Kind::category;
        has_tag |= s.kind == CategorySource::Kind::tag;
    }
    CHECK(has_category);
    CHECK(has_tag);
}

TEST_CASE("category members: continuation paging yields all unique pages") {
    // 1037 members served in pages of 500/500/37.
    auto handler = [](const httplib::Request& req) -> json {
        REQUIRE(req.get_param_value("action") == "query");
        REQUIRE(req.get_param_value("list") == "categorymembers");
        REQUIRE(req.get_param_value("cmtitle") == "Category:Test words");
        REQUIRE(req.get_param_value("cmprop") == "title|ids");
        REQUIRE(req.get_param_value("format") == "json");
        int limit = std::stoi(req.get_param_value("cmlimit"));
        REQUIRE(limit == 500);
        long long start = 1;
        if (req.has_param("cmcontinue")) {
            auto token = req.get_param_value("cmcontinue");
            start = std::stoll(token.substr(token.find('|') + 1));
        }
        json members = json::array();
        long long end = std::min<long long>(start + limit - 1, 1037);
        for (long long id = start; id <= end; ++id)
            members.push_back({{"pageid", id}, {"ns", 0}, {"title", "term" + std::to_string(id)}});
        json doc = {{"query", {{"categorymembers", members}}}};
        if (end < 1037) doc["continue"] = {{"cmcontinue", "page|" + std::to_string(end + 1)}};
        return doc;
    };
    MockWiki wiki(handler);
    auto client = make_client(wiki, fresh_dir("paging"));
    CategorySource src{"en", CategorySource::Kind::category, "Category:Test words"};

    auto members = client.fetch_category_members(src);
    REQUIRE(members.size() == 1037);
    CHECK(members.front().title == "term1");
    CHECK(members.front().page_id == 1);
    CHECK(members.back().title == "term1037");
    CHECK(members.back().page_id == 1037);

    auto reqs = wiki.requests();
    REQUIRE(reqs.size() == 3);
    CHECK(param(reqs[0], "cmcontinue").empty());
    CHECK(param(reqs[1], "cmcontinue") == "page|501");
    CHECK(param(reqs[2], "cmcontinue") == "page|1001");
}

TEST_CASE("category members: non-article namespaces and repeats are dropped") {
    auto handler = [](const httplib::Request&) -> json {
        return {{"query",
                 {{"categorymembers",
                   json::array({member(10, "slur"), member(11, "Talk:slur", 1),
                                member(12, "Category:Subcat", 14), member(10, "slur"),
                                member(13, "insult")})}}}};
    };
    MockWiki wiki(handler);
    auto client = make_client(wiki, fresh_dir("dedup"));
    CategorySource src{"en", CategorySource::Kind::category, "Category:Test words"};
    auto members = client.fetch_category_members(src);
    REQUIRE(members.size() == 2);
    CHECK(members[0].page_id == 10);
    CHECK(members[1].page_id == 13);
}

TEST_CASE("tag members arrive via backlink listing with continuation") {
    auto handler = [](const httplib::Request& req) -> json {
        REQUIRE(req.get_param_value("action") == "query");
        REQUIRE(req.get_param_value("prop") == "linkhere");
        REQUIRE(req.get_param_value("titles") == "derogatory");
        REQUIRE(!req.get_param_value("lhlimit").empty());
        bool second = req.has_param("lhcontinue");
        json links = json::array();
        if (!second) {
            links.push_back(member(101, "moron"));
            links.push_back(member(102, "Wiktionary:Tea room", 4));
        } else {
            REQUIRE(req.get_param_value("lhcontinue") == "77");
            links.push_back(member(103, "dunce"));
            links.push_back(member(101, "moron"));
        }
        // servers reply with the "linkshere" spelling
        json doc = {{"query", {{"pages", {{"4242", {{"pageid", 4242}, {"title", "derogatory"}, {"linkshere", links}}}}}}}};
        if (!second) doc["continue"] = {{"lhcontinue", 77}};
        return doc;
    };
    MockWiki wiki(handler);
    auto client = make_client(wiki, fresh_dir("linkhere"));
    auto members = client.fetch_linkhere_members("derogatory");
    REQUIRE(members.size() == 2);
    CHECK(members[0].title == "moron");
    CHECK(members[1].title == "dunce");
    CHECK(wiki.requests().size() == 2);
}

TEST_CASE("tag members: requested key spelling is accepted too") {
    auto handler = [](const httplib::Request&) -> json {
        return {{"query",
                 {{"pages",
                   {{"7", {{"pageid", 7}, {"title", "t"}, {"linkhere", json::array({member(55, "jerk")})}}}}}}}};
    };
    MockWiki wiki(handler);
    auto client = make_client(wiki, fresh_dir("linkhere_alt"));
    auto members = client.fetch_linkhere_members("t");
    REQUIRE(members.size() == 1);
    CHECK(members[0].page_id == 55);
}

TEST_CASE("api and transport errors map to typed exceptions") {
    SECTION("api error body") {
        MockWiki wiki([](const httplib::Request&) -> json {
            return {{"error", {{"code", "invalidcategory"}, {"info", "The category name is not valid"}}}};
        });
        auto client = make_client(wiki, fresh_dir("err_api"));
        CategorySource src{"en", CategorySource::Kind::category, "Category:Bad"};
        try {
            client.fetch_category_members(src);
            FAIL("expected ApiError");
        } catch (const ApiError& ex) {
            CHECK(ex.code == "invalidcategory");
        }
    }
    SECTION("non-2xx status") {
        MockWiki wiki([](const httplib::Request&) -> json {
            return {{"__status", 404}, {"__body", "not found"}};
        });
        auto client = make_client(wiki, fresh_dir("err_404"));
        CHECK_THROWS_AS(client.fetch_linkhere_members("x"), ApiError);
    }
    SECTION("unreachable host") {
        WikiClientConfig cfg;
        cfg.api_base = "http://127.0.0.1:9/w/api.php";
        cfg.language = "en";
        cfg.cache_dir = fresh_dir("err_net");
        cfg.timeout_s = 1;
        cfg.max_retries = 0;
        WikiClient client(cfg);
        CategorySource src{"en", CategorySource::Kind::category, "Category:X"};
        CHECK_THROWS_AS(client.fetch_category_members(src), NetworkError);
    }
    SECTION("non-json body") {
        MockWiki wiki([](const httplib::Request&) -> json {
            return {{"__status", 200}, {"__body", "<html>surprise</html>"}};
        });
        auto client = make_client(wiki, fresh_dir("err_body"));
        CHECK_THROWS_AS(client.fetch_linkhere_members("x"), ApiError);
    }
}

TEST_CASE("server errors are retried") {
    std::atomic<int> calls{0};
    MockWiki wiki([&calls](const httplib::Request&) -> json {
        if (calls.fetch_add(1) == 0) return {{"__status", 503}, {"__body", "busy"}};
        return {{"query", {{"categorymembers", json::array({member(1, "word")})}}}};
    });
    WikiClientConfig cfg;
    cfg.api_base = wiki.api_base();
    cfg.language = "en";
    cfg.cache_dir = fresh_dir("retry");
    cfg.max_retries = 2;
    WikiClient client(cfg);
    CategorySource src{"en", CategorySource::Kind::category, "Category:X"};
    auto members = client.fetch_category_members(src);
    REQUIRE(members.size() == 1);
    CHECK(calls.load() == 2);
}

TEST_CASE("page html is cached on disk and reused") {
    std::atomic<int> calls{0};
    MockWiki wiki([&calls](const httplib::Request& req) -> json {
        REQUIRE(req.get_param_value("action") == "parse");
        REQUIRE(req.get_param_value("prop") == "text");
        REQUIRE(req.get_param_value("redirects") == "1");
        ++calls;
        long long id = std::stoll(req.get_param_value("pageid"));
        return {{"parse", {{"title", "page"}, {"text", {{"*", "<p>html for " + std::to_string(id) + "</p>"}}}}}};
    });
    auto cache = fresh_dir("html_cache");
    auto client = make_client(wiki, cache);

    auto html = client.fetch_page_html(321);
    CHECK(html == "<p>html for 321</p>");
    CHECK(fs::exists(cache / "en" / "321.html"));
    CHECK(calls.load() == 1);

    // same client, same page: served from disk
    CHECK(client.fetch_page_html(321) == html);
    CHECK(calls.load() == 1);
}

TEST_CASE("populated cache answers everything with zero network traffic") {
    auto cache = fresh_dir("resume");
    std::vector<PageRef> first;
    std::string html;
    {
        MockWiki wiki([](const httplib::Request& req) -> json {
            if (req.get_param_value("action") == "parse")
                return {{"parse", {{"text", {{"*", "<p>def</p>"}}}}}};
            return {{"query", {{"categorymembers", json::array({member(5, "word")})}}}};
        });
        auto client = make_client(wiki, cache);
        CategorySource src{"en", CategorySource::Kind::category, "Category:X"};
        first = client.fetch_category_members(src);
        html = client.fetch_page_html(5);
        CHECK(client.network_calls() == 2);
    }
    // New client aimed at a dead endpoint: cache must satisfy both queries.
    WikiClientConfig cfg;
    cfg.api_base = "http://127.0.0.1:9/w/api.php";
    cfg.language = "en";
    cfg.cache_dir = cache;
    cfg.timeout_s = 1;
    WikiClient cold(cfg);
    CategorySource src{"en", CategorySource::Kind::category, "Category:X"};
    auto again = cold.fetch_category_members(src);
    REQUIRE(again.size() == first.size());
    CHECK(again[0].title == first[0].title);
    CHECK(again[0].page_id == first[0].page_id);
    CHECK(cold.fetch_page_html(5) == html);
    CHECK(cold.network_calls() == 0);
}

TEST_CASE("offline mode turns cache misses into errors") {
    WikiClientConfig cfg;
    cfg.api_base = "http://127.0.0.1:9/w/api.php";
    cfg.language = "en";
    cfg.cache_dir = fresh_dir("offline");
    cfg.offline = true;
    WikiClient client(cfg);
    CategorySource src{"en", CategorySource::Kind::category, "Category:X"};
    CHECK_THROWS_AS(client.fetch_category_members(src), NetworkError);
    CHECK_THROWS_AS(client.fetch_page_html(9), NetworkError);
    CHECK(client.network_calls() == 0);
}

TEST_CASE("config validation") {
    WikiClientConfig cfg;
    cfg.language = "en";
    cfg.page_size = 0;
    CHECK_THROWS_AS(WikiClient(cfg), ConfigError);
    cfg.page_size = 501;
    CHECK_THROWS_AS(WikiClient(cfg), ConfigError);
    CHECK(default_api_base("el") == "https://el.wiktionary.org/w/api.php");
    CHECK_THROWS_AS(default_api_base("xx"), UnsupportedLanguageError);
}
