#include "cdnexpose/dns.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace cdnexpose {

using nlohmann::json;

std::string_view to_string(RecordType t) {
    switch (t) {
        case RecordType::A: return "A";
        case RecordType::NS: return "NS";
        case RecordType::CNAME: return "CNAME";
        case RecordType::AAAA: return "AAAA";
    }
    return "?";
}

std::optional<RecordType> record_type_from_string(std::string_view s) {
    for (auto t : {RecordType::A, RecordType::NS, RecordType::CNAME, RecordType::AAAA})
        if (to_string(t) == s) return t;
    return std::nullopt;
}

std::string normalize_name(std::string_view name) {
    std::string out(name);
    while (!out.empty() && out.back() == '.') out.pop_back();
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_valid_hostname(std::string_view host) {
    if (!host.empty() && host.back() == '.') host.remove_suffix(1);
    if (host.empty() || host.size() > 253) return false;
    std::size_t start = 0;
    while (start <= host.size()) {
        auto end = host.find('.', start);
        if (end == std::string_view::npos) end = host.size();
        auto label = host.substr(start, end - start);
        if (label.empty() || label.size() > 63) return false;
        if (label.front() == '-' || label.back() == '-') return false;
        for (char c : label)
            if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') return false;
        start = end + 1;
        if (end == host.size()) break;
    }
    return true;
}

std::vector<std::string> DnsAnswer::values(std::string_view name, RecordType type) const {
    const std::string wanted = normalize_name(name);
    std::vector<std::string> out;
    for (const auto& r : records)
        if (r.type == type && normalize_name(r.name) == wanted) out.push_back(r.data);
    return out;
}

namespace dns_wire {

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    put16(out, static_cast<std::uint16_t>(v >> 16));
    put16(out, static_cast<std::uint16_t>(v & 0xFFFF));
}

void put_name(std::vector<std::uint8_t>& out, std::string_view name) {
    const std::string n = normalize_name(name);
    std::size_t start = 0;
    while (start < n.size()) {
        auto end = n.find('.', start);
        if (end == std::string::npos) end = n.size();
        const auto len = end - start;
        if (len == 0 || len > 63) throw DnsError("invalid label in '" + n + "'");
        out.push_back(static_cast<std::uint8_t>(len));
        out.insert(out.end(), n.begin() + static_cast<std::ptrdiff_t>(start),
                   n.begin() + static_cast<std::ptrdiff_t>(end));
        start = end + 1;
    }
    out.push_back(0);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> p) : p_(p) {}

    std::uint8_t u8() {
        need(1);
        return p_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>((p_[pos_] << 8) | p_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t hi = u16();
        return (hi << 16) | u16();
    }
    std::span<const std::uint8_t> bytes(std::size_t n) {
        need(n);
        auto s = p_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string name() { return name_at(pos_, true); }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) { pos_ = p; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > p_.size()) throw DnsError("truncated DNS message");
    }

    // Follows compression pointers; a hop limit stops pointer loops.
    std::string name_at(std::size_t& cursor, bool advance) {
        std::string out;
        std::size_t at = cursor;
        bool jumped = false;
        for (int hops = 0; hops < 128; ++hops) {
            if (at >= p_.size()) throw DnsError("truncated name");
            std::uint8_t len = p_[at];
            if ((len & 0xC0) == 0xC0) {
                if (at + 1 >= p_.size()) throw DnsError("truncated pointer");
                std::size_t target = static_cast<std::size_t>(((len & 0x3F) << 8) | p_[at + 1]);
                if (!jumped && advance) cursor = at + 2;
                jumped = true;
                at = target;
                continue;
            }
            if (len & 0xC0) throw DnsError("unsupported label type");
            if (len == 0) {
                if (!jumped && advance) cursor = at + 1;
                return out;
            }
            if (at + 1 + len > p_.size()) throw DnsError("truncated label");
            if (!out.empty()) out.push_back('.');
            out.append(reinterpret_cast<const char*>(&p_[at + 1]), len);
            at += 1 + len;
        }
        throw DnsError("name compression loop");
    }

    std::span<const std::uint8_t> p_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_query(std::uint16_t id, std::string_view name, RecordType type) {
    std::vector<std::uint8_t> out;
    put16(out, id);
    put16(out, 0x0100);  // RD
    put16(out, 1);
    put16(out, 0);
    put16(out, 0);
    put16(out, 0);
    put_name(out, name);
    put16(out, static_cast<std::uint16_t>(type));
    put16(out, 1);  // IN
    return out;
}

std::vector<std::uint8_t> encode_response(std::uint16_t id, const Question& question,
                                          const DnsAnswer& answer) {
    std::vector<std::uint8_t> out;
    put16(out, id);
    put16(out, static_cast<std::uint16_t>(0x8180 | (answer.rcode & 0x0F)));  // QR RD RA
    put16(out, 1);
    put16(out, static_cast<std::uint16_t>(answer.records.size()));
    put16(out, 0);
    put16(out, 0);
    put_name(out, question.name);
    put16(out, question.type);
    put16(out, 1);
    for (const auto& r : answer.records) {
        put_name(out, r.name);
        put16(out, static_cast<std::uint16_t>(r.type));
        put16(out, 1);
        put32(out, r.ttl);
        std::vector<std::uint8_t> rdata;
        if (r.type == RecordType::A) {
            std::array<std::uint8_t, 4> buf{};
            if (inet_pton(AF_INET, r.data.c_str(), buf.data()) != 1)
                throw DnsError("bad A data '" + r.data + "'");
            rdata.assign(buf.begin(), buf.end());
        } else if (r.type == RecordType::AAAA) {
            std::array<std::uint8_t, 16> buf{};
            if (inet_pton(AF_INET6, r.data.c_str(), buf.data()) != 1)
                throw DnsError("bad AAAA data '" + r.data + "'");
            rdata.assign(buf.begin(), buf.end());
        } else {
            put_name(rdata, r.data);
        }
        put16(out, static_cast<std::uint16_t>(rdata.size()));
        out.insert(out.end(), rdata.begin(), rdata.end());
    }
    return out;
}

Message decode(std::span<const std::uint8_t> packet) {
    Reader in(packet);
    Message m;
    m.id = in.u16();
    const std::uint16_t flags = in.u16();
    m.response = (flags & 0x8000) != 0;
    m.truncated = (flags & 0x0200) != 0;
    m.rcode = flags & 0x0F;
    const std::uint16_t qd = in.u16();
    const std::uint16_t an = in.u16();
    in.u16();
    in.u16();
    for (int i = 0; i < qd; ++i) {
        Question q;
        q.name = in.name();
        q.type = in.u16();
        in.u16();
        m.questions.push_back(std::move(q));
    }
    for (int i = 0; i < an; ++i) {
        std::string name = in.name();
        const std::uint16_t type = in.u16();
        in.u16();
        const std::uint32_t ttl = in.u32();
        const std::uint16_t rdlen = in.u16();
        const std::size_t rdata_start = in.pos();
        auto rdata = in.bytes(rdlen);
        DnsRecord r{normalize_name(name), RecordType::A, ttl, {}};
        char text[INET6_ADDRSTRLEN] = {};
        switch (type) {
            case 1:
                if (rdlen != 4) throw DnsError("bad A record length");
                inet_ntop(AF_INET, rdata.data(), text, sizeof text);
                r.data = text;
                break;
            case 28:
                if (rdlen != 16) throw DnsError("bad AAAA record length");
                inet_ntop(AF_INET6, rdata.data(), text, sizeof text);
                r.type = RecordType::AAAA;
                r.data = text;
                break;
            case 2:
            case 5: {
                const std::size_t after = in.pos();
                in.seek(rdata_start);
                r.type = type == 2 ? RecordType::NS : RecordType::CNAME;
                r.data = normalize_name(in.name());
                in.seek(after);
                break;
            }
            default: continue;
        }
        m.answers.push_back(std::move(r));
    }
    return m;
}

}  // namespace dns_wire

// ---------------------------------------------------------------------------

namespace {

struct Endpoint {
    sockaddr_storage addr{};
    socklen_t len = 0;
    int family = AF_INET;
};

Endpoint parse_endpoint(const std::string& spec) {
    std::string host = spec;
    int port = 53;
    if (!spec.empty() && spec.front() == '[') {
        auto close = spec.find(']');
        if (close == std::string::npos) throw ConfigError("bad resolver endpoint " + spec);
        host = spec.substr(1, close - 1);
        if (close + 1 < spec.size() && spec[close + 1] == ':')
            port = std::stoi(spec.substr(close + 2));
    } else if (std::count(spec.begin(), spec.end(), ':') == 1) {
        auto colon = spec.find(':');
        host = spec.substr(0, colon);
        port = std::stoi(spec.substr(colon + 1));
    }
    Endpoint ep;
    if (auto* v4 = reinterpret_cast<sockaddr_in*>(&ep.addr);
        inet_pton(AF_INET, host.c_str(), &v4->sin_addr) == 1) {
        v4->sin_family = AF_INET;
        v4->sin_port = htons(static_cast<std::uint16_t>(port));
        ep.len = sizeof(sockaddr_in);
        ep.family = AF_INET;
        return ep;
    }
    auto* v6 = reinterpret_cast<sockaddr_in6*>(&ep.addr);
    if (inet_pton(AF_INET6, host.c_str(), &v6->sin6_addr) == 1) {
        v6->sin6_family = AF_INET6;
        v6->sin6_port = htons(static_cast<std::uint16_t>(port));
        ep.len = sizeof(sockaddr_in6);
        ep.family = AF_INET6;
        return ep;
    }
    throw ConfigError("resolver endpoint must be a numeric address: " + spec);
}

class Socket {
public:
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() {
        if (fd_ >= 0) ::close(fd_);
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    int get() const { return fd_; }

private:
    int fd_;
};

std::uint16_t random_id() {
    static thread_local std::mt19937 rng{std::random_device{}()};
    return static_cast<std::uint16_t>(rng() & 0xFFFF);
}

}  // namespace

UdpResolver::UdpResolver(std::string endpoint, std::chrono::milliseconds timeout, int attempts)
    : endpoint_(std::move(endpoint)), timeout_(timeout), attempts_(std::max(1, attempts)) {
    parse_endpoint(endpoint_);
}

UdpResolver UdpResolver::system() {
    std::ifstream in("/etc/resolv.conf");
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream words(line);
        std::string key, value;
        if (words >> key >> value && key == "nameserver") {
            if (value.find(':') != std::string::npos) value = "[" + value + "]:53";
            return UdpResolver(value);
        }
    }
    return UdpResolver("127.0.0.1");
}

DnsAnswer UdpResolver::query(const std::string& name, RecordType type) {
    const Endpoint ep = parse_endpoint(endpoint_);
    Socket sock(::socket(ep.family, SOCK_DGRAM | SOCK_CLOEXEC, 0));
    if (sock.get() < 0) throw DnsError(std::string("socket: ") + std::strerror(errno));

    for (int attempt = 0; attempt < attempts_; ++attempt) {
        const std::uint16_t id = random_id();
        const auto packet = dns_wire::encode_query(id, name, type);
        if (::sendto(sock.get(), packet.data(), packet.size(), 0,
                     reinterpret_cast<const sockaddr*>(&ep.addr), ep.len) < 0)
            throw DnsError(std::string("sendto: ") + std::strerror(errno));

        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        while (true) {
            auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (left.count() <= 0) break;
            pollfd pfd{sock.get(), POLLIN, 0};
            int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
            if (ready <= 0) break;
            std::array<std::uint8_t, 4096> buf{};
            ssize_t n = ::recv(sock.get(), buf.data(), buf.size(), 0);
            if (n <= 0) continue;
            dns_wire::Message m;
            try {
                m = dns_wire::decode(std::span<const std::uint8_t>(buf.data(),
                                                                   static_cast<std::size_t>(n)));
            } catch (const DnsError&) {
                continue;
            }
            if (!m.response || m.id != id) continue;
            // TODO: retry over TCP when the TC bit is set; long CNAME chains
            // rarely overflow 512 bytes so truncated answers are used as-is.
            return DnsAnswer{m.rcode, std::move(m.answers)};
        }
    }
    throw ResolveTimeout("no DNS response for " + name + " " + std::string(to_string(type)) +
                         " from " + endpoint_);
}

// ---------------------------------------------------------------------------

namespace {

std::string rcode_name(int rcode) {
    switch (rcode) {
        case kRcodeNoError: return "NOERROR";
        case kRcodeServFail: return "SERVFAIL";
        case kRcodeNxDomain: return "NXDOMAIN";
        default: return std::to_string(rcode);
    }
}

int rcode_value(const json& j) {
    if (j.is_number_integer()) return j.get<int>();
    const auto s = j.get<std::string>();
    if (s == "NOERROR") return kRcodeNoError;
    if (s == "SERVFAIL") return kRcodeServFail;
    if (s == "NXDOMAIN") return kRcodeNxDomain;
    throw SchemaError("unknown rcode " + s);
}

std::string fixture_key(const std::string& name, RecordType type) {
    return normalize_name(name) + " " + std::string(to_string(type));
}

}  // namespace

json answer_to_json(const DnsAnswer& answer) {
    json j;
    j["rcode"] = rcode_name(answer.rcode);
    json records = json::array();
    std::uint32_t ttl = 0;
    for (const auto& r : answer.records) {
        records.push_back(r.data);
        ttl = r.ttl;
    }
    j["records"] = std::move(records);
    j["ttl"] = ttl;
    return j;
}

DnsAnswer answer_from_json(const std::string& name, RecordType type, const json& j) {
    if (!j.is_object()) throw SchemaError("DNS fixture entry for " + name + " must be an object");
    DnsAnswer answer;
    answer.rcode = rcode_value(j.value("rcode", json("NOERROR")));
    const auto ttl = j.value("ttl", 300u);
    if (auto it = j.find("records"); it != j.end()) {
        for (const auto& v : *it)
            answer.records.push_back({normalize_name(name), type, ttl,
                                      type == RecordType::A || type == RecordType::AAAA
                                          ? v.get<std::string>()
                                          : normalize_name(v.get<std::string>())});
    }
    return answer;
}

FixtureResolver::FixtureResolver(json recorded) : recorded_(std::move(recorded)) {
    if (!recorded_.is_object()) throw SchemaError("DNS fixture must be a JSON object");
    for (const auto& [key, _] : recorded_.items()) {
        auto space = key.rfind(' ');
        if (space == std::string::npos || !record_type_from_string(key.substr(space + 1)))
            throw SchemaError("DNS fixture key '" + key + "' must be 'name TYPE'");
        ++names_[normalize_name(key.substr(0, space))];
    }
}

FixtureResolver FixtureResolver::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open DNS fixture " + path);
    try {
        return FixtureResolver(json::parse(in));
    } catch (const json::parse_error& e) {
        throw SchemaError("DNS fixture " + path + ": " + e.what());
    }
}

DnsAnswer FixtureResolver::query(const std::string& name, RecordType type) {
    const auto key = fixture_key(name, type);
    if (auto it = recorded_.find(key); it != recorded_.end()) {
        if (it->value("rcode", json("NOERROR")) == json("TIMEOUT"))
            throw ResolveTimeout("recorded timeout for " + key);
        return answer_from_json(name, type, *it);
    }
    if (names_.contains(normalize_name(name))) return DnsAnswer{kRcodeNoError, {}};
    return DnsAnswer{kRcodeNxDomain, {}};
}

DnsAnswer RecordingResolver::query(const std::string& name, RecordType type) {
    const auto key = fixture_key(name, type);
    try {
        DnsAnswer answer = inner_.query(name, type);
        DnsAnswer relevant{answer.rcode, {}};
        for (const auto& v : answer.values(name, type))
            relevant.records.push_back({normalize_name(name), type, 0, v});
        std::lock_guard lock(mutex_);
        json entry = answer_to_json(relevant);
        if (!answer.records.empty()) entry["ttl"] = answer.records.front().ttl;
        recorded_[key] = std::move(entry);
        return answer;
    } catch (const ResolveTimeout&) {
        std::lock_guard lock(mutex_);
        recorded_[key] = json{{"rcode", "TIMEOUT"}};
        throw;
    }
}

json RecordingResolver::recorded() const {
    std::lock_guard lock(mutex_);
    return recorded_;
}

}  // namespace cdnexpose
