#include "cdnexpose/detector.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(const NodeRef& ref) {
    if (ref.frame) return std::to_string(*ref.frame) + "/" + std::to_string(ref.node);
    return std::to_string(ref.node);
}

std::string_view to_string(CandidateClass c) {
    switch (c) {
        case CandidateClass::LoginEntrance: return "LoginEntrance";
        case CandidateClass::AccountInput: return "AccountInput";
        case CandidateClass::PasswordInput: return "PasswordInput";
    }
    return "?";
}

ScoringWeights ScoringWeights::from_json(const json& doc) {
    if (!doc.is_object()) throw SchemaError("weights must be a JSON object");
    ScoringWeights w;
    const std::array<std::pair<const char*, int*>, 7> fields{{
        {"visible", &w.visible},
        {"interactive", &w.interactive},
        {"keyword_frequency", &w.keyword_frequency},
        {"keyword_frequency_cap", &w.keyword_frequency_cap},
        {"inner_text_length", &w.inner_text_length},
        {"inner_text_length_threshold", &w.inner_text_length_threshold},
        {"input_type", &w.input_type},
    }};
    for (const auto& [key, value] : doc.items()) {
        if (key == "version") continue;
        auto it = std::find_if(fields.begin(), fields.end(),
                               [&](const auto& f) { return key == f.first; });
        if (it == fields.end()) throw SchemaError("weights: unknown feature '" + key + "'");
        if (!value.is_number_integer())
            throw SchemaError("weights: '" + key + "' must be an integer");
        *it->second = value.get<int>();
    }
    if (w.visible < 0 || w.interactive < 0 || w.keyword_frequency < 0 || w.input_type < 0 ||
        w.keyword_frequency_cap < 0)
        throw InvariantError("weights: positive features need non-negative weights");
    return w;
}

ScoringWeights ScoringWeights::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weights file " + path);
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SchemaError("weights " + path + ": " + e.what());
    }
}

namespace {

constexpr std::array<std::string_view, 5> kCandidateTags{"input", "button", "label", "a",
                                                         "iframe"};

bool is_candidate_tag(std::string_view tag) {
    return std::find(kCandidateTags.begin(), kCandidateTags.end(), tag) != kCandidateTags.end();
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string input_type_of(const ElementNode& e) {
    if (e.tag != "input") return {};
    auto type = e.attribute("type");
    return type ? lower(*type) : std::string("text");
}

int hits_for(const KeywordCounts& freq, const KeywordLexicon& lexicon, KeywordClass cls) {
    int total = 0;
    for (const auto& [keyword, count] : freq) {
        auto it = lexicon.positive.find(keyword);
        if (it != lexicon.positive.end() && it->second.contains(cls)) total += count;
    }
    return total;
}

bool any_of_set(const KeywordCounts& freq, const std::set<std::string>& keywords) {
    return std::any_of(freq.begin(), freq.end(), [&](const auto& kv) {
        return kv.second > 0 && keywords.contains(kv.first);
    });
}

std::size_t utf8_length(std::string_view s) {
    return static_cast<std::size_t>(std::count_if(
        s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

KeywordClass keyword_class_for(CandidateClass c) {
    switch (c) {
        case CandidateClass::LoginEntrance: return KeywordClass::entrance;
        case CandidateClass::AccountInput: return KeywordClass::account;
        case CandidateClass::PasswordInput: return KeywordClass::password;
    }
    return KeywordClass::entrance;
}

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.position < b.position;
}

}  // namespace

std::vector<FilteredElement> filter_candidates(const PageSnapshot& page) {
    const double fold = kFoldFactor * page.viewport_height;
    std::vector<FilteredElement> out;
    for (const auto& node : page.nodes) {
        if (is_candidate_tag(node.tag) && node.bbox.top <= fold) {
            out.push_back({NodeRef{std::nullopt, node.node_id}, &node, node.bbox.top, node.visible,
                           node.interactive, DomPosition{node.dom_order, -1}});
        }
        if (node.tag != "iframe" || !node.frame) continue;
        for (const auto& inner : node.frame->nodes) {
            const double top = node.bbox.top + inner.bbox.top;
            if (!is_candidate_tag(inner.tag) || top > fold) continue;
            out.push_back({NodeRef{node.node_id, inner.node_id}, &inner, top,
                           node.visible && inner.visible, inner.interactive,
                           DomPosition{node.dom_order, inner.dom_order}});
        }
    }
    return out;
}

std::optional<CandidateClass> classify(const ElementNode& element, const KeywordCounts& freq,
                                       const KeywordLexicon& lexicon) {
    if (any_of_set(freq, lexicon.deprecation)) return std::nullopt;

    auto entrance = [&]() -> std::optional<CandidateClass> {
        if (hits_for(freq, lexicon, KeywordClass::entrance) > 0 &&
            !any_of_set(freq, lexicon.entrance_veto))
            return CandidateClass::LoginEntrance;
        return std::nullopt;
    };

    if (element.tag == "input") {
        const std::string type = input_type_of(element);
        if (type == "password") return CandidateClass::PasswordInput;
        if (type == "submit" || type == "button") return entrance();
        if (type == "text" || type == "email" || type == "tel" || type.empty()) {
            if (hits_for(freq, lexicon, KeywordClass::password) > 0)
                return CandidateClass::PasswordInput;
            if (hits_for(freq, lexicon, KeywordClass::account) > 0)
                return CandidateClass::AccountInput;
        }
        return std::nullopt;
    }
    if (element.tag == "a" || element.tag == "button" || element.tag == "label") return entrance();
    return std::nullopt;
}

ScoredCandidate score(const FilteredElement& element, CandidateClass cls,
                      const KeywordCounts& freq, const KeywordLexicon& lexicon,
                      const ScoringWeights& weights) {
    const ElementNode& node = *element.element;
    ScoredCandidate out;
    out.ref = element.ref;
    out.cls = cls;
    out.position = element.position;
    out.keywords = freq;
    out.input_type = input_type_of(node);

    const int occurrences =
        std::min(hits_for(freq, lexicon, keyword_class_for(cls)), weights.keyword_frequency_cap);
    const bool long_text =
        cls == CandidateClass::LoginEntrance &&
        utf8_length(node.inner_text) > static_cast<std::size_t>(weights.inner_text_length_threshold);
    const bool type_match = (cls == CandidateClass::PasswordInput && out.input_type == "password") ||
                            (cls == CandidateClass::AccountInput && out.input_type == "email");

    out.feature_trace = {
        {"keyword_frequency", occurrences * weights.keyword_frequency},
        {"visible", element.visible ? weights.visible : 0},
        {"interactive", element.interactive ? weights.interactive : 0},
        {"inner_text_length", long_text ? weights.inner_text_length : 0},
        {"input_type", type_match ? weights.input_type : 0},
    };
    for (const auto& [_, contribution] : out.feature_trace) out.score += contribution;
    return out;
}

DetectionResult detect(const PageSnapshot& page, const KeywordLexicon& lexicon,
                       const ScoringWeights& weights) {
    DetectionResult result;
    result.page_url = page.url;
    for (const auto& candidate : filter_candidates(page)) {
        const auto freq = keyword_frequencies(*candidate.element, lexicon);
        const auto cls = classify(*candidate.element, freq, lexicon);
        if (!cls) continue;
        auto scored = score(candidate, *cls, freq, lexicon, weights);
        switch (*cls) {
            case CandidateClass::LoginEntrance: result.entrances.push_back(std::move(scored)); break;
            case CandidateClass::AccountInput:
                result.account_inputs.push_back(std::move(scored));
                break;
            case CandidateClass::PasswordInput:
                result.password_inputs.push_back(std::move(scored));
                break;
        }
    }
    for (auto* list : {&result.entrances, &result.account_inputs, &result.password_inputs})
        std::stable_sort(list->begin(), list->end(), ranks_before);
    return result;
}

namespace {

ordered_json ref_json(const NodeRef& ref) {
    ordered_json j;
    j["node_id"] = ref.node;
    j["frame"] = ref.frame ? ordered_json(*ref.frame) : ordered_json(nullptr);
    return j;
}

ordered_json candidates_json(const std::vector<ScoredCandidate>& list) {
    ordered_json arr = ordered_json::array();
    for (const auto& c : list) {
        ordered_json j = ref_json(c.ref);
        j["class"] = to_string(c.cls);
        j["score"] = c.score;
        ordered_json trace;
        for (const auto& [name, value] : c.feature_trace) trace[name] = value;
        j["feature_trace"] = std::move(trace);
        ordered_json kw = ordered_json::object();
        for (const auto& [k, v] : c.keywords) kw[k] = v;
        j["keywords"] = std::move(kw);
        arr.push_back(std::move(j));
    }
    return arr;
}

}  // namespace

ordered_json to_json(const DetectionResult& result) {
    ordered_json j;
    j["page_url"] = result.page_url;
    j["entrances"] = candidates_json(result.entrances);
    j["account_inputs"] = candidates_json(result.account_inputs);
    j["password_inputs"] = candidates_json(result.password_inputs);
    return j;
}

bool ActionPlan::submits() const {
    return !steps.empty() && std::holds_alternative<PressEnterStep>(steps.back());
}

std::optional<ActionPlan> plan_actions(const DetectionResult& result, const Credentials& creds,
                                       int depth_used, int max_depth) {
    (void)creds;
    if (depth_used > max_depth)
        throw DepthExceeded("page depth " + std::to_string(depth_used) + " exceeds " +
                            std::to_string(max_depth));
    ActionPlan plan;
    plan.max_depth = max_depth;
    if (!result.password_inputs.empty()) {
        const auto& password = result.password_inputs.front();
        if (!result.account_inputs.empty()) {
            const auto& account = result.account_inputs.front();
            auto email = account.keywords.find("email");
            const bool as_email = account.input_type == "email" ||
                                  (email != account.keywords.end() && email->second > 0);
            plan.steps.emplace_back(FillStep{account.ref, ValueRole::account, as_email});
        }
        plan.steps.emplace_back(FillStep{password.ref, ValueRole::password, false});
        plan.steps.emplace_back(PressEnterStep{password.ref});
        return plan;
    }
    if (!result.entrances.empty() && depth_used < max_depth) {
        plan.steps.emplace_back(ClickStep{result.entrances.front().ref});
        plan.steps.emplace_back(RecurseStep{});
        return plan;
    }
    return std::nullopt;
}

ordered_json to_json(const ActionPlan& plan) {
    ordered_json steps = ordered_json::array();
    for (const auto& step : plan.steps) {
        std::visit(
            [&](const auto& s) {
                using T = std::decay_t<decltype(s)>;
                ordered_json j;
                if constexpr (std::is_same_v<T, FillStep>) {
                    j["action"] = "fill";
                    j["target"] = ref_json(s.target);
                    j["role"] = s.role == ValueRole::account ? "account" : "password";
                    j["as_email"] = s.as_email;
                } else if constexpr (std::is_same_v<T, PressEnterStep>) {
                    j["action"] = "press_enter";
                    j["target"] = ref_json(s.target);
                } else if constexpr (std::is_same_v<T, ClickStep>) {
                    j["action"] = "click";
                    j["target"] = ref_json(s.target);
                } else {
                    j["action"] = "recurse";
                }
                steps.push_back(std::move(j));
            },
            step);
    }
    ordered_json j;
    j["max_depth"] = plan.max_depth;
    j["steps"] = std::move(steps);
    return j;
}

}  // namespace cdnexpose
