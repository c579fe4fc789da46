#include "cdnexpose/snapshot.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace cdnexpose {

using nlohmann::json;
using nlohmann::ordered_json;

std::optional<std::string_view> ElementNode::attribute(std::string_view name) const {
    for (const auto& [key, value] : attributes) {
        if (key == name) return std::string_view(value);
    }
    return std::nullopt;
}

bool operator==(const ElementNode& a, const ElementNode& b) {
    if (a.node_id != b.node_id || a.tag != b.tag || a.attributes != b.attributes ||
        a.inner_text != b.inner_text || !(a.bbox == b.bbox) || a.visible != b.visible ||
        a.interactive != b.interactive || a.children != b.children || a.dom_order != b.dom_order)
        return false;
    if (static_cast<bool>(a.frame) != static_cast<bool>(b.frame)) return false;
    return !a.frame || *a.frame == *b.frame;
}

bool operator==(const PageSnapshot& a, const PageSnapshot& b) {
    return a.url == b.url && a.viewport_width == b.viewport_width &&
           a.viewport_height == b.viewport_height && a.root == b.root && a.nodes == b.nodes &&
           a.captured_at == b.captured_at;
}

const ElementNode* PageSnapshot::find(NodeId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &nodes[it->second];
}

const ElementNode& PageSnapshot::at(NodeId id) const {
    const auto* node = find(id);
    if (node == nullptr) throw InvariantError("no node with id " + std::to_string(id));
    return *node;
}

PageSnapshot build_snapshot(std::string url, int width, int height, std::string captured_at,
                            std::vector<ElementNode> nodes, int frame_depth) {
    if (width <= 0 || height <= 0)
        throw InvariantError("viewport dimensions must be positive");
    if (nodes.empty()) throw InvariantError("snapshot has no nodes");

    std::unordered_map<NodeId, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto& n = nodes[i];
        if (!index.emplace(n.node_id, i).second)
            throw InvariantError("duplicate node id " + std::to_string(n.node_id));
        if (n.tag.empty()) throw InvariantError("empty tag on node " + std::to_string(n.node_id));
        if (std::any_of(n.tag.begin(), n.tag.end(),
                        [](unsigned char c) { return std::isupper(c) != 0; }))
            throw InvariantError("tag '" + n.tag + "' is not lowercase");
        if (n.visible && (n.bbox.width == 0 || n.bbox.height == 0))
            throw InvariantError("node " + std::to_string(n.node_id) +
                                 " is visible with zero area");
    }

    std::unordered_map<NodeId, NodeId> parent;
    for (const auto& n : nodes) {
        for (NodeId child : n.children) {
            if (!index.contains(child))
                throw InvariantError("node " + std::to_string(n.node_id) +
                                     " references missing child " + std::to_string(child));
            if (!parent.emplace(child, n.node_id).second)
                throw InvariantError("node " + std::to_string(child) + " has two parents");
        }
    }

    std::optional<NodeId> root;
    for (const auto& n : nodes) {
        if (parent.contains(n.node_id)) continue;
        if (root) throw InvariantError("snapshot has more than one root");
        root = n.node_id;
    }
    if (!root) throw InvariantError("snapshot has no root (cycle)");

    // Pre-order walk assigns dom_order; anything left unvisited sits on a cycle.
    std::int64_t order = 0;
    std::vector<NodeId> stack{*root};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        auto& n = nodes[index[id]];
        n.dom_order = order++;
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
    }
    if (order != static_cast<std::int64_t>(nodes.size()))
        throw InvariantError("snapshot graph is not a tree (cycle detected)");

    for (auto& n : nodes) {
        if (n.frame && frame_depth >= 1) n.frame.reset();
    }

    std::sort(nodes.begin(), nodes.end(),
              [](const ElementNode& a, const ElementNode& b) { return a.dom_order < b.dom_order; });

    PageSnapshot page;
    page.url = std::move(url);
    page.viewport_width = width;
    page.viewport_height = height;
    page.captured_at = std::move(captured_at);
    page.root = *root;
    page.nodes = std::move(nodes);
    for (std::size_t i = 0; i < page.nodes.size(); ++i) page.index_[page.nodes[i].node_id] = i;
    return page;
}

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(where + ": missing key '" + key + "'");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const auto& v = require(obj, key, where);
    if (!v.is_string()) throw SchemaError(where + ": '" + key + "' must be a string");
    return v.get<std::string>();
}

bool require_bool(const json& obj, const char* key, const std::string& where) {
    const auto& v = require(obj, key, where);
    if (!v.is_boolean()) throw SchemaError(where + ": '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::int64_t require_int(const json& v, const std::string& what) {
    if (!v.is_number_integer()) throw SchemaError(what + " must be an integer");
    return v.get<std::int64_t>();
}

bool is_rfc3339(const std::string& s) {
    static const std::regex pattern(
        R"(^\d{4}-\d{2}-\d{2}[Tt ]\d{2}:\d{2}:\d{2}(\.\d+)?([Zz]|[+-]\d{2}:\d{2})$)");
    return std::regex_match(s, pattern);
}

PageSnapshot parse_snapshot(const json& doc, int depth);

ElementNode parse_node(const json& obj, std::size_t position, int depth) {
    const std::string where = "nodes[" + std::to_string(position) + "]";
    if (!obj.is_object()) throw SchemaError(where + " must be an object");

    ElementNode n;
    n.node_id = require_int(require(obj, "id", where), where + ".id");
    n.tag = require_string(obj, "tag", where);
    n.inner_text = require_string(obj, "text", where);
    n.visible = require_bool(obj, "visible", where);
    n.interactive = require_bool(obj, "interactive", where);

    const auto& attrs = require(obj, "attrs", where);
    if (!attrs.is_array()) throw SchemaError(where + ".attrs must be an array");
    for (const auto& kv : attrs) {
        if (!kv.is_array() || kv.size() != 2 || !kv[0].is_string() || !kv[1].is_string())
            throw SchemaError(where + ".attrs entries must be [name, value] string pairs");
        n.attributes.emplace_back(kv[0].get<std::string>(), kv[1].get<std::string>());
    }

    const auto& bbox = require(obj, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(), [](const json& v) { return v.is_number(); }))
        throw SchemaError(where + ".bbox must be [top,left,width,height]");
    n.bbox = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(),
              bbox[3].get<double>()};

    const auto& children = require(obj, "children", where);
    if (!children.is_array()) throw SchemaError(where + ".children must be an array");
    for (const auto& c : children) n.children.push_back(require_int(c, where + ".children[]"));

    if (auto it = obj.find("frame"); it != obj.end() && !it->is_null()) {
        if (!it->is_object()) throw SchemaError(where + ".frame must be an object");
        // Frames nested below the first level are dropped.
        if (depth == 0)
            n.frame = std::make_shared<const PageSnapshot>(parse_snapshot(*it, depth + 1));
    }
    return n;
}

PageSnapshot parse_snapshot(const json& doc, int depth) {
    const std::string where = depth == 0 ? "snapshot" : "frame";
    if (!doc.is_object()) throw SchemaError(where + " must be a JSON object");

    std::string url = require_string(doc, "url", where);
    const auto& viewport = require(doc, "viewport", where);
    if (!viewport.is_object()) throw SchemaError(where + ".viewport must be an object");
    auto width = require_int(require(viewport, "width", where + ".viewport"), "viewport.width");
    auto height = require_int(require(viewport, "height", where + ".viewport"), "viewport.height");
    std::string captured_at = require_string(doc, "captured_at", where);
    if (!is_rfc3339(captured_at))
        throw SchemaError(where + ".captured_at is not an RFC 3339 timestamp");

    const auto& nodes_json = require(doc, "nodes", where);
    if (!nodes_json.is_array()) throw SchemaError(where + ".nodes must be an array");
    std::vector<ElementNode> nodes;
    nodes.reserve(nodes_json.size());
    for (std::size_t i = 0; i < nodes_json.size(); ++i)
        nodes.push_back(parse_node(nodes_json[i], i, depth));

    return build_snapshot(std::move(url), static_cast<int>(width), static_cast<int>(height),
                          std::move(captured_at), std::move(nodes), depth);
}

}  // namespace

PageSnapshot load_snapshot(std::string_view raw) {
    json doc;
    try {
        doc = json::parse(raw.begin(), raw.end());
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("snapshot is not valid JSON: ") + e.what());
    }
    return parse_snapshot(doc, 0);
}

PageSnapshot load_snapshot_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open snapshot file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_snapshot(buf.str());
}

ordered_json snapshot_to_json(const PageSnapshot& page) {
    ordered_json doc;
    doc["url"] = page.url;
    doc["viewport"] = {{"width", page.viewport_width}, {"height", page.viewport_height}};
    doc["captured_at"] = page.captured_at;
    ordered_json nodes = ordered_json::array();
    for (const auto& n : page.nodes) {
        ordered_json node;
        node["id"] = n.node_id;
        node["tag"] = n.tag;
        ordered_json attrs = ordered_json::array();
        for (const auto& [k, v] : n.attributes) attrs.push_back({k, v});
        node["attrs"] = std::move(attrs);
        node["text"] = n.inner_text;
        node["bbox"] = {n.bbox.top, n.bbox.left, n.bbox.width, n.bbox.height};
        node["visible"] = n.visible;
        node["interactive"] = n.interactive;
        node["children"] = n.children;
        if (n.frame) node["frame"] = snapshot_to_json(*n.frame);
        nodes.push_back(std::move(node));
    }
    doc["nodes"] = std::move(nodes);
    return doc;
}

std::string serialize_snapshot(const PageSnapshot& page) { return snapshot_to_json(page).dump(); }

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    bool prev_lower = false;  // case of the previous byte before folding
    for (unsigned char c : s) {
        const bool ascii_alnum = c < 0x80 && std::isalnum(c);
        if (!ascii_alnum && c < 0x80) {
            flush();
            prev_lower = false;
            continue;
        }
        if (c < 0x80 && std::isupper(c) && prev_lower) flush();
        prev_lower = c < 0x80 && std::islower(c);
        current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
    flush();
    return tokens;
}

std::string_view to_string(KeywordClass c) {
    switch (c) {
        case KeywordClass::entrance: return "entrance";
        case KeywordClass::account: return "account";
        case KeywordClass::password: return "password";
    }
    return "?";
}

std::optional<KeywordClass> keyword_class_from_string(std::string_view s) {
    if (s == "entrance") return KeywordClass::entrance;
    if (s == "account") return KeywordClass::account;
    if (s == "password") return KeywordClass::password;
    return std::nullopt;
}

KeywordLexicon KeywordLexicon::defaults() {
    using K = KeywordClass;
    KeywordLexicon lex;
    lex.positive = {
        {"login", {K::entrance, K::account}},
        {"signin", {K::entrance, K::account}},
        {"account", {K::entrance, K::account}},
        {"email", {K::entrance, K::account}},
        {"username", {K::account}},
        {"user", {K::account}},
        {"password", {K::password}},
        {"pass", {K::password}},
        {"auth", {K::entrance}},
        {"member", {K::entrance}},
        {"register", {}},
    };
    lex.deprecation = {"user guide", "policy", "privacy", "terms", "help", "forgot"};
    lex.entrance_veto = {"register", "signup"};
    return lex;
}

KeywordLexicon KeywordLexicon::from_json(const json& doc) {
    if (!doc.is_object()) throw SchemaError("lexicon must be a JSON object");
    KeywordLexicon lex;
    auto positive = doc.find("positive");
    if (positive == doc.end() || !positive->is_object())
        throw SchemaError("lexicon: 'positive' must be an object");
    for (const auto& [keyword, classes] : positive->items()) {
        if (!classes.is_array()) throw SchemaError("lexicon: classes of '" + keyword + "'");
        auto& set = lex.positive[keyword];
        for (const auto& c : classes) {
            auto parsed = c.is_string() ? keyword_class_from_string(c.get<std::string>())
                                        : std::nullopt;
            if (!parsed) throw SchemaError("lexicon: unknown class for '" + keyword + "'");
            set.insert(*parsed);
        }
    }
    auto deprecation = doc.find("deprecation");
    if (deprecation == doc.end() || !deprecation->is_array())
        throw SchemaError("lexicon: 'deprecation' must be an array");
    for (const auto& d : *deprecation) {
        if (!d.is_string()) throw SchemaError("lexicon: deprecation entries must be strings");
        lex.deprecation.insert(d.get<std::string>());
    }
    if (auto veto = doc.find("entrance_veto"); veto != doc.end()) {
        if (!veto->is_array()) throw SchemaError("lexicon: 'entrance_veto' must be an array");
        for (const auto& v : *veto) {
            if (!v.is_string()) throw SchemaError("lexicon: entrance_veto entries must be strings");
            lex.entrance_veto.insert(v.get<std::string>());
        }
    } else {
        lex.entrance_veto = defaults().entrance_veto;
    }
    lex.validate();
    return lex;
}

KeywordLexicon KeywordLexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError("lexicon " + path + ": " + e.what());
    }
    return from_json(doc);
}

std::set<std::string> KeywordLexicon::vocabulary() const {
    std::set<std::string> all(deprecation.begin(), deprecation.end());
    for (const auto& [k, _] : positive) all.insert(k);
    all.insert(entrance_veto.begin(), entrance_veto.end());
    return all;
}

void KeywordLexicon::validate() const {
    auto check_keyword = [](const std::string& k) {
        auto tokens = tokenize(k);
        std::string joined;
        for (const auto& t : tokens) joined += (joined.empty() ? "" : " ") + t;
        if (tokens.empty() || joined != k)
            throw InvariantError("lexicon keyword '" + k +
                                 "' must be lowercase words separated by single spaces");
    };
    for (const auto& [k, _] : positive) {
        check_keyword(k);
        if (deprecation.contains(k))
            throw InvariantError("keyword '" + k + "' is both positive and deprecated");
    }
    for (const auto& k : deprecation) check_keyword(k);
    for (const auto& k : entrance_veto) check_keyword(k);
    for (const char* required : {"login", "account", "email"})
        if (!positive.contains(required))
            throw InvariantError(std::string("lexicon lacks positive keyword '") + required + "'");
    for (const char* required : {"user guide", "policy"})
        if (!deprecation.contains(required))
            throw InvariantError(std::string("lexicon lacks deprecation keyword '") + required +
                                 "'");
}

namespace {

struct Pattern {
    std::string keyword;
    std::vector<std::string> tokens;
};

std::vector<Pattern> patterns_for(const KeywordLexicon& lexicon) {
    std::vector<Pattern> patterns;
    for (const auto& k : lexicon.vocabulary()) patterns.push_back({k, tokenize(k)});
    // Longest first so "user guide" is tried before "user".
    std::stable_sort(patterns.begin(), patterns.end(), [](const Pattern& a, const Pattern& b) {
        return a.tokens.size() > b.tokens.size();
    });
    return patterns;
}

}  // namespace

void count_keywords(std::string_view text, const KeywordLexicon& lexicon, KeywordCounts& counts) {
    const auto tokens = tokenize(text);
    const auto patterns = patterns_for(lexicon);
    std::size_t i = 0;
    while (i < tokens.size()) {
        std::size_t consumed = 0;
        for (const auto& p : patterns) {
            if (p.tokens.size() < 2 || i + p.tokens.size() > tokens.size()) continue;
            if (std::equal(p.tokens.begin(), p.tokens.end(), tokens.begin() + i)) {
                ++counts[p.keyword];
                consumed = p.tokens.size();
                break;
            }
        }
        if (consumed == 0 && i + 1 < tokens.size()) {
            const std::string joined = tokens[i] + tokens[i + 1];
            for (const auto& p : patterns) {
                if (p.tokens.size() == 1 && p.tokens[0] == joined) {
                    ++counts[p.keyword];
                    consumed = 2;
                    break;
                }
            }
        }
        if (consumed == 0) {
            for (const auto& p : patterns) {
                if (p.tokens.size() == 1 && p.tokens[0] == tokens[i]) {
                    ++counts[p.keyword];
                    break;
                }
            }
            consumed = 1;
        }
        i += consumed;
    }
}

KeywordCounts keyword_frequencies(const ElementNode& element, const KeywordLexicon& lexicon) {
    KeywordCounts counts;
    for (const auto& [name, value] : element.attributes) {
        if (name == "style") continue;
        count_keywords(value, lexicon, counts);
    }
    count_keywords(element.inner_text, lexicon, counts);
    return counts;
}

}  // namespace cdnexpose
