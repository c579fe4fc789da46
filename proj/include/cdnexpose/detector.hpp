#pragma once

#include <compare>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/credentials.hpp"
#include "cdnexpose/snapshot.hpp"

namespace cdnexpose {

// Addresses an element either in the top document or inside the content
// document of an iframe (frame = node id of the iframe element).
struct NodeRef {
    std::optional<NodeId> frame;
    NodeId node = 0;

    auto operator<=>(const NodeRef&) const = default;
};

std::string to_string(const NodeRef& ref);

// Document position usable across frame boundaries: frame contents sort
// directly after their iframe element.
struct DomPosition {
    std::int64_t outer = 0;
    std::int64_t inner = -1;

    auto operator<=>(const DomPosition&) const = default;
};

// An element that survived filtering, with geometry resolved against the
// top-level document.
struct FilteredElement {
    NodeRef ref;
    const ElementNode* element = nullptr;
    double top = 0;
    bool visible = false;
    bool interactive = false;
    DomPosition position;
};

enum class CandidateClass { LoginEntrance, AccountInput, PasswordInput };

std::string_view to_string(CandidateClass c);

struct ScoringWeights {
    int visible = 3;
    int interactive = 3;
    int keyword_frequency = 2;
    int keyword_frequency_cap = 3;
    int inner_text_length = -1;
    int inner_text_length_threshold = 40;
    int input_type = 4;

    static ScoringWeights defaults() { return {}; }
    static ScoringWeights from_json(const nlohmann::json& doc);
    static ScoringWeights load(const std::string& path);
};

struct ScoredCandidate {
    NodeRef ref;
    CandidateClass cls = CandidateClass::LoginEntrance;
    int score = 0;
    // Insertion ordered; score is the sum of the contributions.
    std::vector<std::pair<std::string, int>> feature_trace;
    DomPosition position;
    KeywordCounts keywords;
    std::string input_type;
};

struct DetectionResult {
    std::string page_url;
    std::vector<ScoredCandidate> entrances;
    std::vector<ScoredCandidate> account_inputs;
    std::vector<ScoredCandidate> password_inputs;

    bool empty() const {
        return entrances.empty() && account_inputs.empty() && password_inputs.empty();
    }
};

inline constexpr double kFoldFactor = 1.5;

// Nodes tagged input/button/label/a/iframe whose top edge lies within 1.5
// viewport heights, in document order. Descends into captured iframe
// documents, offsetting their geometry by the iframe's position.
std::vector<FilteredElement> filter_candidates(const PageSnapshot& page);

std::optional<CandidateClass> classify(const ElementNode& element, const KeywordCounts& freq,
                                       const KeywordLexicon& lexicon);

ScoredCandidate score(const FilteredElement& element, CandidateClass cls,
                      const KeywordCounts& freq, const KeywordLexicon& lexicon,
                      const ScoringWeights& weights = {});

DetectionResult detect(const PageSnapshot& page, const KeywordLexicon& lexicon,
                       const ScoringWeights& weights = {});

nlohmann::ordered_json to_json(const DetectionResult& result);

// ---------------------------------------------------------------------------
// Action planning

enum class ValueRole { account, password };

struct FillStep {
    NodeRef target;
    ValueRole role = ValueRole::account;
    // The account field expects an e-mail address.
    bool as_email = false;
    bool operator==(const FillStep&) const = default;
};
struct PressEnterStep {
    NodeRef target;
    bool operator==(const PressEnterStep&) const = default;
};
struct ClickStep {
    NodeRef target;
    bool operator==(const ClickStep&) const = default;
};
struct RecurseStep {
    bool operator==(const RecurseStep&) const = default;
};

using ActionStep = std::variant<FillStep, PressEnterStep, ClickStep, RecurseStep>;

struct ActionPlan {
    std::vector<ActionStep> steps;
    int max_depth = 2;

    bool submits() const;
    bool operator==(const ActionPlan&) const = default;
};

inline constexpr int kDefaultMaxDepth = 2;

class DepthExceeded : public Error {
public:
    using Error::Error;
};

// Fill the best account input (if any) and the best password input, then
// press ENTER in the password field; otherwise click the best entrance and
// recurse while depth allows. nullopt means login not found.
std::optional<ActionPlan> plan_actions(const DetectionResult& result, const Credentials& creds,
                                       int depth_used, int max_depth = kDefaultMaxDepth);

nlohmann::ordered_json to_json(const ActionPlan& plan);

}  // namespace cdnexpose
