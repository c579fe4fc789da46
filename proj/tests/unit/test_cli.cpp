#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "cdnexpose/report.hpp"
#include "test_support.hpp"

using nlohmann::json;
namespace ts = testsupport;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

Run cli(const std::vector<std::string>& args, bool guard_sockets = false) {
    ts::TempDir capture;
    std::string cmd;
    if (guard_sockets) cmd += "LD_PRELOAD=" + quote(CDNEXPOSE_SOCKET_GUARD) + " ";
    cmd += quote(CDNEXPOSE_CLI);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " >" + quote((capture / "out").string()) + " 2>" + quote((capture / "err").string());
    const int raw = std::system(cmd.c_str());
    Run r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = ts::read_file(capture / "out");
    r.err = ts::read_file(capture / "err");
    return r;
}

const std::vector<std::string> kReportFiles = {"records.jsonl", "intervals.csv", "providers.csv", "categories.csv",
                                               "cdf.csv"};

std::vector<std::string> fixture_scan(const ts::TempDir& out) {
    return {"scan", "--input", ts::corpus_dir() + "/input.csv", "--out", out.str(), "--fixtures", ts::corpus_dir()};
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(cli({}).status == 1);
    CHECK(cli({"bogus"}).status == 1);
    CHECK(cli({"scan", "--out", "/tmp"}).status == 1);
    CHECK(cli({"--help"}).status == 0);
}

TEST_CASE("detect prints the detection result") {
    auto r = cli({"detect", "--snapshot", ts::corpus_dir() + "/sites/site038.example/snapshots/01.snapshot.json"});
    REQUIRE(r.status == 0);
    auto doc = json::parse(r.out);
    CHECK_FALSE(doc["password_inputs"].empty());
    CHECK(doc.contains("account_inputs"));
    CHECK(doc.contains("entrances"));
}

TEST_CASE("detect on a blank page") {
    ts::TempDir dir;
    ts::write_file(dir / "blank.json", ts::page_doc({}).dump());
    auto r = cli({"detect", "--snapshot", (dir / "blank.json").string()});
    REQUIRE(r.status == 0);
    auto doc = json::parse(r.out);
    CHECK(doc["password_inputs"].empty());
    CHECK(doc["account_inputs"].empty());
    CHECK(doc["entrances"].empty());
}

TEST_CASE("detect on a malformed snapshot") {
    ts::TempDir dir;
    ts::write_file(dir / "bad.json", "{\"url\": 3");
    auto r = cli({"detect", "--snapshot", (dir / "bad.json").string()});
    CHECK(r.status == 1);
    CHECK(r.err.find("SchemaError") != std::string::npos);
}

TEST_CASE("attribute against recorded lookups") {
    const auto fixtures = ts::fixtures_dir() + "/attribution";
    auto fastly = cli({"attribute", "www.fastly-customer.example", "--fixtures", fixtures});
    REQUIRE(fastly.status == 0);
    auto doc = json::parse(fastly.out);
    CHECK(doc["provider"] == "Fastly");
    CHECK(doc["basis"] == "cname");

    auto unknown = cli({"attribute", "nobody.example", "--fixtures", fixtures});
    REQUIRE(unknown.status == 0);
    auto none = json::parse(unknown.out);
    CHECK(none["provider"].is_null());
    CHECK(none["basis"] == "none");

    auto bad = cli({"attribute", "a..b", "--fixtures", fixtures});
    CHECK(bad.status == 1);
    CHECK(bad.err.find("ConfigError") != std::string::npos);
}

TEST_CASE("report reproduces the provider table") {
    ts::TempDir dir;
    ts::write_file(dir / "published.jsonl", cdnexpose::records_jsonl(cdnexpose::published_dataset()));
    auto r = cli({"report", "--records", (dir / "published.jsonl").string(), "--out", (dir / "out").string()});
    REQUIRE(r.status == 0);
    const auto providers = ts::read_file(dir / "out" / "providers.csv");
    CHECK(providers.rfind("provider,cdn_enabled,exposed,pct\nCloudflare,6356,2803,44\nAkamai,3280,818,25\n", 0) == 0);
    CHECK(providers.find("\nIncapsula,216,142,66\n") != std::string::npos);
    CHECK(ts::read_file(dir / "out" / "categories.csv").find("\nEducation,145,14,10\n") != std::string::npos);
}

TEST_CASE("report on a truncated file names the line") {
    ts::TempDir dir;
    const auto jsonl = cdnexpose::records_jsonl(cdnexpose::published_dataset());
    // Three full lines, then half of the fourth.
    std::size_t cut = 0;
    for (int i = 0; i < 3; ++i) cut = jsonl.find('\n', cut) + 1;
    ts::write_file(dir / "cut.jsonl", jsonl.substr(0, cut + 20));
    auto r = cli({"report", "--records", (dir / "cut.jsonl").string(), "--out", (dir / "out").string()});
    CHECK(r.status == 1);
    CHECK(r.err.find("SchemaError") != std::string::npos);
    CHECK(r.err.find("line 4") != std::string::npos);
}

TEST_CASE("empty input list gives header-only reports") {
    ts::TempDir dir;
    ts::write_file(dir / "empty.csv", "rank,domain\n");
    auto r = cli({"scan", "--input", (dir / "empty.csv").string(), "--out", (dir / "out").string(), "--fixtures",
                  ts::corpus_dir()},
                 true);
    REQUIRE(r.status == 0);
    CHECK(ts::read_file(dir / "out" / "providers.csv") == "provider,cdn_enabled,exposed,pct\n");
    CHECK(ts::read_file(dir / "out" / "records.jsonl").empty());
}

TEST_CASE("partial failures exit 2") {
    ts::TempDir dir;
    ts::write_file(dir / "list.csv", "1,site001.example\n2,missing.example\n");
    auto r = cli({"scan", "--input", (dir / "list.csv").string(), "--out", (dir / "out").string(), "--fixtures",
                  ts::corpus_dir()},
                 true);
    CHECK(r.status == 2);
    CHECK(fs::exists(dir / "out" / "records.jsonl"));
}

TEST_CASE("bad scan configuration exits 1") {
    ts::TempDir dir;
    ts::write_file(dir / "list.csv", "1,a..example\n");
    CHECK(cli({"scan", "--input", (dir / "list.csv").string(), "--out", dir.str(), "--fixtures", ts::corpus_dir()})
              .status == 1);
    CHECK(cli({"scan", "--input", ts::corpus_dir() + "/input.csv", "--out", dir.str(), "--fixtures",
               ts::corpus_dir(), "--workers", "0"})
              .status == 1);
    CHECK(cli({"scan", "--input", ts::corpus_dir() + "/input.csv", "--out", dir.str(), "--fixtures",
               ts::corpus_dir(), "--weights", "/nonexistent.json"})
              .status == 1);
}

TEST_CASE("fixture scans open no network sockets and are deterministic") {
    ts::TempDir first, second;
    auto a = cli(fixture_scan(first), true);
    REQUIRE_MESSAGE(a.status == 0, a.err);
    auto b = cli(fixture_scan(second), true);
    REQUIRE_MESSAGE(b.status == 0, b.err);
    for (const auto& f : kReportFiles) CHECK_MESSAGE(ts::read_file(first / f) == ts::read_file(second / f), f);

    // Re-aggregating the scan's own records reproduces its reports.
    ts::TempDir again;
    auto r = cli({"report", "--records", (first / "records.jsonl").string(), "--out", again.str()}, true);
    REQUIRE(r.status == 0);
    for (const auto& f : kReportFiles) CHECK_MESSAGE(ts::read_file(first / f) == ts::read_file(again / f), f);
}

TEST_CASE("the socket guard does refuse network sockets") {
    // A non-fixture attribute needs a UDP socket.
    auto r = cli({"attribute", "www.example.com", "--resolver", "127.0.0.1:9"}, true);
    CHECK(r.status == 86);
}
