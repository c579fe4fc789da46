#include <doctest.h>

#include <random>
#include <set>

#include "cdnexpose/detector.hpp"
#include "cdnexpose/session.hpp"
#include "test_support.hpp"

using namespace cdnexpose;
using nlohmann::json;
namespace ts = testsupport;

namespace {

const Credentials kCreds("abcdefghijklmnopqrstuvwx", "0123456789abcdef!");

FilteredElement as_filtered(const ElementNode& e) {
    return {NodeRef{std::nullopt, e.node_id}, &e, e.bbox.top, e.visible, e.interactive,
            DomPosition{e.dom_order, -1}};
}

std::vector<NodeRef> refs(const std::vector<ScoredCandidate>& v) {
    std::vector<NodeRef> out;
    for (const auto& c : v) out.push_back(c.ref);
    return out;
}

bool sorted_by_score_then_position(const std::vector<ScoredCandidate>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        const auto& a = v[i - 1];
        const auto& b = v[i];
        if (a.score < b.score) return false;
        if (a.score == b.score && !(a.position < b.position)) return false;
    }
    return true;
}

int trace_sum(const ScoredCandidate& c) {
    int s = 0;
    for (const auto& [_, v] : c.feature_trace) s += v;
    return s;
}

}  // namespace

TEST_CASE("filter keeps candidate tags within one and a half viewports") {
    auto p = ts::page({ts::node(2, "button", json::array(), "Go", 100),
                       ts::node(3, "input", json::array(), "", 1501),
                       ts::node(4, "input", json::array(), "", 1500),
                       ts::node(5, "div", json::array(), "login", 10),
                       ts::node(6, "a", json::array(), "x", 1499.5)},
                      1920, 1000);
    std::vector<NodeId> ids;
    for (const auto& f : filter_candidates(p)) ids.push_back(f.ref.node);
    CHECK(ids == std::vector<NodeId>{2, 4, 6});
}

TEST_CASE("filter soundness and completeness on random pages") {
    std::mt19937_64 rng(17);
    static const char* tags[] = {"input", "button", "label", "a", "iframe", "div", "span", "img"};
    const std::set<std::string> allowed = {"input", "button", "label", "a", "iframe"};
    for (int round = 0; round < 200; ++round) {
        std::vector<json> nodes;
        const int n = 1 + static_cast<int>(rng() % 30);
        const int vh = 200 + static_cast<int>(rng() % 1000);
        for (int i = 0; i < n; ++i)
            nodes.push_back(ts::node(10 + i, tags[rng() % 8], json::array(), "",
                                     static_cast<double>(rng() % (3 * vh))));
        auto p = ts::page(nodes, 1280, vh);
        auto out = filter_candidates(p);
        std::size_t expected = 0;
        for (const auto& nd : p.nodes)
            if (allowed.count(nd.tag) && nd.bbox.top <= 1.5 * vh) ++expected;
        CHECK(out.size() == expected);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(allowed.count(out[i].element->tag) == 1);
            CHECK(out[i].top <= 1.5 * vh);
            if (i > 0) CHECK(out[i - 1].position < out[i].position);
        }
    }
}

TEST_CASE("filter output matches the node lists recorded in every corpus manifest") {
    int pages = 0;
    for (const auto& dir : ts::corpus_sites()) {
        auto m = json::parse(ts::read_file(dir + "/manifest.json"));
        for (std::size_t i = 0; i < m["snapshots"].size(); ++i) {
            auto p = load_snapshot_file(dir + "/" + m["snapshots"][i].get<std::string>());
            std::vector<NodeRef> got;
            for (const auto& f : filter_candidates(p)) got.push_back(f.ref);
            std::vector<NodeRef> want;
            for (const auto& r : m["filtered"][i]) want.push_back(parse_node_ref(r.get<std::string>()));
            CHECK_MESSAGE(got == want, dir, " snapshot ", i);
            ++pages;
        }
    }
    CHECK(pages > 100);
}

TEST_CASE("site003 mixed tags") {
    const auto dir = ts::corpus_dir() + "/sites/site003.example";
    auto m = json::parse(ts::read_file(dir + "/manifest.json"));
    // The login page mixes anchors, labels, inputs and a button.
    auto p = load_snapshot_file(dir + "/snapshots/01.snapshot.json");
    std::set<std::string> tags;
    std::vector<std::string> ids;
    for (const auto& f : filter_candidates(p)) {
        tags.insert(f.element->tag);
        ids.push_back(to_string(f.ref));
    }
    CHECK(tags.size() >= 2);
    CHECK(ids == m["filtered"][1].get<std::vector<std::string>>());
}

TEST_CASE("iframe contents are offset by the frame position") {
    auto inner = ts::page_doc({ts::node(2, "input", {{"type", "password"}}, "", 600)});
    auto outer = ts::page_doc({ts::node(2, "iframe", json::array(), "", 800)}, 1920, 1000);
    outer["nodes"][1]["frame"] = inner;
    auto p = load_snapshot(outer.dump());
    auto out = filter_candidates(p);
    // iframe at 800 survives, the input at 800 + 600 = 1400 too.
    REQUIRE(out.size() == 2);
    CHECK(out[1].ref == NodeRef{2, 2});
    CHECK(out[1].top == doctest::Approx(1400));

    outer["nodes"][1]["bbox"][0] = 1000;
    auto p2 = load_snapshot(outer.dump());
    CHECK(filter_candidates(p2).size() == 1);
}

TEST_CASE("classify examples") {
    auto lex = KeywordLexicon::defaults();
    ElementNode pw;
    pw.tag = "input";
    pw.attributes = {{"type", "password"}};
    CHECK(classify(pw, keyword_frequencies(pw, lex), lex) == CandidateClass::PasswordInput);

    ElementNode a;
    a.tag = "a";
    a.inner_text = "Sign in to your account";
    CHECK(classify(a, keyword_frequencies(a, lex), lex) == CandidateClass::LoginEntrance);

    ElementNode b;
    b.tag = "button";
    b.inner_text = "Login";
    b.attributes = {{"title", "user guide"}};
    CHECK(classify(b, keyword_frequencies(b, lex), lex) == std::nullopt);

    ElementNode acct;
    acct.tag = "input";
    acct.attributes = {{"type", "email"}, {"name", "email"}};
    CHECK(classify(acct, keyword_frequencies(acct, lex), lex) == CandidateClass::AccountInput);

    ElementNode untyped;
    untyped.tag = "input";
    untyped.attributes = {{"name", "username"}};
    CHECK(classify(untyped, keyword_frequencies(untyped, lex), lex) == CandidateClass::AccountInput);

    ElementNode search;
    search.tag = "input";
    search.attributes = {{"type", "search"}, {"name", "q"}};
    CHECK(classify(search, keyword_frequencies(search, lex), lex) == std::nullopt);

    ElementNode submit;
    submit.tag = "input";
    submit.attributes = {{"type", "submit"}, {"value", "Log in"}};
    CHECK(classify(submit, keyword_frequencies(submit, lex), lex) == CandidateClass::LoginEntrance);

    ElementNode signup;
    signup.tag = "a";
    signup.inner_text = "Create account - Sign up";
    CHECK(classify(signup, keyword_frequencies(signup, lex), lex) == std::nullopt);
}

TEST_CASE("deprecation keywords veto every class") {
    auto lex = KeywordLexicon::defaults();
    std::mt19937_64 rng(23);
    const std::vector<std::string> positive = {"login", "Sign in", "account", "email", "password",
                                               "username", "member"};
    const std::vector<std::string> deprecated = {"forgot", "help", "privacy policy", "terms",
                                                 "user guide"};
    static const char* tags[] = {"a", "button", "label", "input"};
    for (int i = 0; i < 500; ++i) {
        std::vector<json> nodes;
        for (int k = 0; k < 6; ++k) {
            std::string text = positive[rng() % positive.size()] + " " +
                               deprecated[rng() % deprecated.size()];
            json attrs = json::array();
            if (rng() % 2) attrs.push_back({"type", rng() % 2 ? "password" : "text"});
            nodes.push_back(ts::node(10 + k, tags[rng() % 4], attrs, text, 50.0 * k));
        }
        auto r = detect(ts::page(nodes), lex);
        CHECK(r.empty());
    }
}

TEST_CASE("score examples") {
    auto lex = KeywordLexicon::defaults();
    auto p = ts::page({ts::node(2, "a", json::array(), "Log in", 10),
                       ts::node(3, "a", json::array(), "Log in", 10)});
    ElementNode hidden = p.at(3);
    hidden.visible = false;
    auto freq = keyword_frequencies(p.at(2), lex);
    auto shown = score(as_filtered(p.at(2)), CandidateClass::LoginEntrance, freq, lex);
    auto unshown = score(as_filtered(hidden), CandidateClass::LoginEntrance, freq, lex);
    CHECK(shown.score > unshown.score);

    ElementNode blank;
    blank.tag = "a";
    auto zero = score(as_filtered(blank), CandidateClass::LoginEntrance, {}, lex);
    CHECK(zero.score == 0);

    auto two = score(as_filtered(p.at(2)), CandidateClass::LoginEntrance, {{"login", 2}}, lex);
    auto one = score(as_filtered(p.at(2)), CandidateClass::LoginEntrance, {{"login", 1}}, lex);
    CHECK(two.score > one.score);
}

TEST_CASE("pinned default weights") {
    auto lex = KeywordLexicon::defaults();
    auto w = ScoringWeights::load(ts::data_dir() + "/weights.json");
    CHECK(w.visible == 3);
    CHECK(w.interactive == 3);
    CHECK(w.keyword_frequency == 2);
    CHECK(w.keyword_frequency_cap == 3);
    CHECK(w.inner_text_length == -1);
    CHECK(w.inner_text_length_threshold == 40);
    CHECK(w.input_type == 4);

    ElementNode pw;
    pw.tag = "input";
    pw.attributes = {{"type", "password"}, {"name", "password"}};
    pw.visible = pw.interactive = true;
    pw.bbox = {0, 0, 100, 20};
    auto c = score(as_filtered(pw), CandidateClass::PasswordInput, keyword_frequencies(pw, lex), lex);
    // visible 3 + interactive 3 + "password" twice (type, name) 2*2 + type match 4
    CHECK(c.score == 14);

    ElementNode a;
    a.tag = "a";
    a.inner_text = "login login login login login and a long tail of text past forty";
    a.visible = true;
    auto e = score(as_filtered(a), CandidateClass::LoginEntrance, keyword_frequencies(a, lex), lex);
    // capped keywords 3*2, visible 3, long text -1
    CHECK(e.score == 8);
}

TEST_CASE("score is the sum of its trace and monotone in every feature") {
    auto lex = KeywordLexicon::defaults();
    std::mt19937_64 rng(29);
    const CandidateClass classes[] = {CandidateClass::LoginEntrance, CandidateClass::AccountInput,
                                      CandidateClass::PasswordInput};
    const std::vector<std::string> kws = {"login", "account", "email", "password", "user", "signin"};
    for (int i = 0; i < 2000; ++i) {
        ElementNode e;
        e.tag = rng() % 2 ? "input" : "a";
        if (e.tag == "input") e.attributes = {{"type", rng() % 2 ? "password" : "email"}};
        e.inner_text = std::string(rng() % 80, 'x');
        e.visible = rng() % 2;
        e.interactive = rng() % 2;
        e.bbox = {0, 0, 10, 10};
        KeywordCounts freq;
        for (const auto& k : kws)
            if (rng() % 3 == 0) freq[k] = 1 + static_cast<int>(rng() % 4);
        auto cls = classes[rng() % 3];
        auto base = score(as_filtered(e), cls, freq, lex);
        CHECK(base.score == trace_sum(base));
        std::set<std::string> names;
        for (const auto& [n, _] : base.feature_trace) names.insert(n);
        for (const char* f : {"keyword_frequency", "visible", "interactive", "inner_text_length"})
            CHECK(names.count(f) == 1);

        auto more = freq;
        more[kws[rng() % kws.size()]] += 1;
        CHECK(score(as_filtered(e), cls, more, lex).score >= base.score);
        auto vis = e;
        vis.visible = true;
        CHECK(score(as_filtered(vis), cls, freq, lex).score >= base.score);
        auto inter = e;
        inter.interactive = true;
        CHECK(score(as_filtered(inter), cls, freq, lex).score >= base.score);
    }
}

TEST_CASE("detect on an empty page") {
    auto r = detect(ts::page({ts::node(2, "div", json::array(), "hello")}), KeywordLexicon::defaults());
    CHECK(r.entrances.empty());
    CHECK(r.account_inputs.empty());
    CHECK(r.password_inputs.empty());
}

TEST_CASE("equal scores tie-break by document order") {
    auto lex = KeywordLexicon::defaults();
    auto p = ts::page({ts::node(2, "a", json::array(), "Login", 300),
                       ts::node(3, "a", json::array(), "Login", 100),
                       ts::node(4, "a", json::array(), "Login", 200)});
    auto r = detect(p, lex);
    CHECK(refs(r.entrances) == std::vector<NodeRef>{{std::nullopt, 2}, {std::nullopt, 3}, {std::nullopt, 4}});
    auto plan = plan_actions(r, kCreds, 0);
    REQUIRE(plan);
    CHECK(std::get<ClickStep>(plan->steps[0]).target == NodeRef{std::nullopt, 2});
}

TEST_CASE("detect is deterministic and its lists are sorted and disjoint on the corpus") {
    auto lex = KeywordLexicon::defaults();
    for (const auto& dir : ts::corpus_sites()) {
        auto m = json::parse(ts::read_file(dir + "/manifest.json"));
        for (const auto& file : m["snapshots"]) {
            auto p = load_snapshot_file(dir + "/" + file.get<std::string>());
            auto r = detect(p, lex);
            CHECK(to_json(r).dump() == to_json(detect(p, lex)).dump());
            CHECK(sorted_by_score_then_position(r.entrances));
            CHECK(sorted_by_score_then_position(r.account_inputs));
            CHECK(sorted_by_score_then_position(r.password_inputs));
            std::set<NodeRef> seen;
            for (const auto* list : {&r.entrances, &r.account_inputs, &r.password_inputs})
                for (const auto& c : *list) CHECK(seen.insert(c.ref).second);
        }
    }
}

TEST_CASE("ground truth of the corpus login pages") {
    auto lex = KeywordLexicon::defaults();
    int login_pages = 0, landing_pages = 0;
    for (const auto& dir : ts::corpus_sites()) {
        auto m = json::parse(ts::read_file(dir + "/manifest.json"));
        if (!m.contains("ground_truth")) continue;
        const auto& gt = m["ground_truth"];
        const auto idx = gt["login_snapshot"].get<std::size_t>();
        auto login = load_snapshot_file(dir + "/" + m["snapshots"][idx].get<std::string>());
        auto r = detect(login, lex);
        // Some pages also carry a sign-up form; the top candidate must be the login one.
        REQUIRE_MESSAGE(!r.password_inputs.empty(), dir);
        REQUIRE_MESSAGE(!r.account_inputs.empty(), dir);
        CHECK(r.password_inputs[0].ref == parse_node_ref(gt["password"].get<std::string>()));
        CHECK(r.account_inputs[0].ref == parse_node_ref(gt["account"].get<std::string>()));
        ++login_pages;

        if (gt["entrance"].is_null()) continue;
        auto landing = load_snapshot_file(dir + "/" + m["snapshots"][0].get<std::string>());
        auto lr = detect(landing, lex);
        REQUIRE_MESSAGE(!lr.entrances.empty(), dir);
        CHECK(lr.account_inputs.empty());
        CHECK(lr.password_inputs.empty());
        CHECK(lr.entrances[0].ref == parse_node_ref(gt["entrance"].get<std::string>()));
        ++landing_pages;
    }
    CHECK(login_pages == 45);
    CHECK(landing_pages > 20);
}

TEST_CASE("plan_actions examples") {
    auto lex = KeywordLexicon::defaults();
    auto form = ts::page({ts::node(2, "input", {{"type", "email"}, {"name", "email"}}, "", 100),
                          ts::node(3, "input", {{"type", "password"}, {"name", "password"}}, "", 150),
                          ts::node(4, "button", json::array(), "Log in", 200)});
    auto r = detect(form, lex);
    auto plan = plan_actions(r, kCreds, 0);
    REQUIRE(plan);
    REQUIRE(plan->steps.size() == 3);
    CHECK(plan->steps[0] == ActionStep{FillStep{{std::nullopt, 2}, ValueRole::account, true}});
    CHECK(plan->steps[1] == ActionStep{FillStep{{std::nullopt, 3}, ValueRole::password, false}});
    CHECK(plan->steps[2] == ActionStep{PressEnterStep{{std::nullopt, 3}}});
    CHECK(plan->submits());

    auto landing = ts::page({ts::node(2, "a", {{"href", "/login"}}, "Log in", 20)});
    auto click = plan_actions(detect(landing, lex), kCreds, 0);
    REQUIRE(click);
    CHECK(click->steps == std::vector<ActionStep>{ClickStep{{std::nullopt, 2}}, RecurseStep{}});
    CHECK_FALSE(click->submits());

    CHECK_FALSE(plan_actions(DetectionResult{}, kCreds, 0));
}

TEST_CASE("password without account input fills only the password") {
    auto lex = KeywordLexicon::defaults();
    auto p = ts::page({ts::node(3, "input", {{"type", "password"}}, "", 150)});
    auto plan = plan_actions(detect(p, lex), kCreds, 1);
    REQUIRE(plan);
    CHECK(plan->steps == std::vector<ActionStep>{FillStep{{std::nullopt, 3}, ValueRole::password, false},
                                                 PressEnterStep{{std::nullopt, 3}}});
}

TEST_CASE("recursion depth is bounded") {
    auto lex = KeywordLexicon::defaults();
    auto landing = ts::page({ts::node(2, "a", json::array(), "Log in", 20)});
    auto r = detect(landing, lex);
    CHECK(plan_actions(r, kCreds, 1));
    CHECK_FALSE(plan_actions(r, kCreds, 2));
    CHECK_THROWS_AS(plan_actions(r, kCreds, 3), DepthExceeded);
}

TEST_CASE("plan invariants over random results") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 1000; ++i) {
        DetectionResult r;
        auto add = [&](std::vector<ScoredCandidate>& list, CandidateClass cls) {
            for (int k = static_cast<int>(rng() % 3); k > 0; --k) {
                ScoredCandidate c;
                c.cls = cls;
                c.ref.node = static_cast<NodeId>(rng() % 1000);
                list.push_back(c);
            }
        };
        add(r.entrances, CandidateClass::LoginEntrance);
        add(r.account_inputs, CandidateClass::AccountInput);
        add(r.password_inputs, CandidateClass::PasswordInput);
        const int depth = static_cast<int>(rng() % 3);
        auto plan = plan_actions(r, kCreds, depth);
        if (!plan) continue;
        bool fills = false;
        int clicks = 0;
        for (const auto& s : plan->steps) {
            fills |= std::holds_alternative<FillStep>(s);
            clicks += std::holds_alternative<ClickStep>(s);
        }
        if (fills) {
            CHECK(std::holds_alternative<PressEnterStep>(plan->steps.back()));
            CHECK(clicks == 0);
        } else {
            CHECK(plan->steps.size() == 2);
            CHECK(clicks == 1);
            CHECK(std::holds_alternative<RecurseStep>(plan->steps[1]));
            CHECK(depth < plan->max_depth);
        }
    }
}

TEST_CASE("detection result serializes with traces") {
    auto lex = KeywordLexicon::defaults();
    auto p = ts::page({ts::node(2, "a", json::array(), "Log in", 20)});
    auto j = to_json(detect(p, lex));
    REQUIRE(j["entrances"].size() == 1);
    CHECK(j["entrances"][0]["node_id"] == 2);
    CHECK(j["entrances"][0]["feature_trace"].contains("visible"));
    CHECK(j["password_inputs"].empty());
}
