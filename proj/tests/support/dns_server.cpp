#include "dns_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <stdexcept>

namespace testsupport {

using namespace cdnexpose;

FixtureDnsServer::FixtureDnsServer(nlohmann::json recorded) : resolver_(std::move(recorded)) {
    fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw std::runtime_error("dns fixture: socket failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
        throw std::runtime_error("dns fixture: bind failed");
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
}

FixtureDnsServer::~FixtureDnsServer() {
    stop_ = true;
    thread_.join();
    ::close(fd_);
}

void FixtureDnsServer::serve() {
    std::array<std::uint8_t, 1500> buf{};
    while (!stop_) {
        pollfd pfd{fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 50) <= 0) continue;
        sockaddr_in peer{};
        socklen_t len = sizeof peer;
        const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&peer), &len);
        if (n <= 0) continue;
        ++queries_;
        dns_wire::Message query;
        try {
            query = dns_wire::decode(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
        } catch (const DnsError&) {
            continue;
        }
        if (query.questions.empty()) continue;
        const auto& q = query.questions.front();
        DnsAnswer answer;
        try {
            answer = resolver_.query(q.name, static_cast<RecordType>(q.type));
        } catch (const ResolveTimeout&) {
            continue;
        }
        const auto reply = dns_wire::encode_response(query.id, q, answer);
        ::sendto(fd_, reply.data(), reply.size(), 0, reinterpret_cast<sockaddr*>(&peer), len);
    }
}

}  // namespace testsupport
