#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

using NodeId = std::int64_t;

struct BoundingBox {
    double top = 0;
    double left = 0;
    double width = 0;
    double height = 0;

    bool operator==(const BoundingBox&) const = default;
};

struct PageSnapshot;

// One rendered element. Attributes keep document order so that keyword
// counting never depends on map iteration.
struct ElementNode {
    NodeId node_id = 0;
    std::string tag;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::string inner_text;
    BoundingBox bbox;
    bool visible = false;
    bool interactive = false;
    std::vector<NodeId> children;
    std::int64_t dom_order = 0;
    // Content document of an iframe, captured one level deep.
    std::shared_ptr<const PageSnapshot> frame;

    std::optional<std::string_view> attribute(std::string_view name) const;
};

bool operator==(const ElementNode& a, const ElementNode& b);

struct PageSnapshot {
    std::string url;
    int viewport_width = 0;
    int viewport_height = 0;
    NodeId root = 0;
    // Sorted by dom_order (pre-order from root).
    std::vector<ElementNode> nodes;
    std::string captured_at;

    const ElementNode* find(NodeId id) const;
    const ElementNode& at(NodeId id) const;

    friend bool operator==(const PageSnapshot& a, const PageSnapshot& b);

private:
    friend PageSnapshot build_snapshot(std::string url, int width, int height,
                                       std::string captured_at, std::vector<ElementNode> nodes,
                                       int frame_depth);
    std::unordered_map<NodeId, std::size_t> index_;
};

// Validates the node set, derives root and dom_order from the tree, and
// returns a snapshot. Throws InvariantError on a malformed tree.
PageSnapshot build_snapshot(std::string url, int width, int height, std::string captured_at,
                            std::vector<ElementNode> nodes, int frame_depth = 0);

// Parses the JSON snapshot document. Throws SchemaError for shape problems
// and InvariantError for tree or geometry violations.
PageSnapshot load_snapshot(std::string_view raw);
PageSnapshot load_snapshot_file(const std::string& path);

nlohmann::ordered_json snapshot_to_json(const PageSnapshot& page);
std::string serialize_snapshot(const PageSnapshot& page);

// ---------------------------------------------------------------------------
// Tokenizer and keyword machinery

// Lowercase word tokens. Splits on every non-word byte and on each
// lowercase-to-uppercase transition. Bytes >= 0x80 are word bytes.
std::vector<std::string> tokenize(std::string_view s);

enum class KeywordClass { entrance, account, password };

std::string_view to_string(KeywordClass c);
std::optional<KeywordClass> keyword_class_from_string(std::string_view s);

struct KeywordLexicon {
    std::map<std::string, std::set<KeywordClass>> positive;
    std::set<std::string> deprecation;
    // Sign-up vocabulary; vetoes the entrance class only.
    std::set<std::string> entrance_veto;

    static KeywordLexicon defaults();
    static KeywordLexicon from_json(const nlohmann::json& doc);
    static KeywordLexicon load(const std::string& path);

    // Every keyword counted by keyword_frequencies.
    std::set<std::string> vocabulary() const;
    void validate() const;
};

using KeywordCounts = std::map<std::string, int>;

// Counts lexicon keywords over the token streams of the element's attribute
// values and its inner text. Multi-word keywords match consecutive tokens,
// and a single-word keyword also matches two adjacent tokens written apart
// ("log in", "e-mail"). Longest match wins and consumes its tokens.
KeywordCounts keyword_frequencies(const ElementNode& element, const KeywordLexicon& lexicon);

// Same counting over one string; exposed for tests and tooling.
void count_keywords(std::string_view text, const KeywordLexicon& lexicon, KeywordCounts& counts);

}  // namespace cdnexpose
