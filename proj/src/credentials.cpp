#include "cdnexpose/credentials.hpp"

#include <array>
#include <string_view>

#include <openssl/rand.h>

namespace cdnexpose {

Credentials::Credentials(std::string account, std::string password)
    : account_(std::move(account)), password_(std::move(password)) {
    if (account_.empty()) throw InvariantError("credentials: empty account");
    if (password_.size() < kPasswordLength)
        throw InvariantError("credentials: password shorter than 16 characters");
}

namespace {

// Uniform draw from the alphabet by rejection sampling over CSPRNG bytes.
std::string random_string(std::string_view alphabet, std::size_t length) {
    const unsigned limit = 256 - (256 % alphabet.size());
    std::string out;
    std::array<unsigned char, 64> buf{};
    while (out.size() < length) {
        if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1)
            throw Error("CSPRNG failure");
        for (unsigned char b : buf) {
            if (b >= limit) continue;
            out.push_back(alphabet[b % alphabet.size()]);
            if (out.size() == length) break;
        }
    }
    return out;
}

std::string printable_ascii() {
    std::string s;
    for (char c = 0x21; c <= 0x7e; ++c) s.push_back(c);
    return s;
}

}  // namespace

Credentials Credentials::generate() {
    static const std::string kPrintable = printable_ascii();
    return Credentials(random_string("abcdefghijklmnopqrstuvwxyz0123456789", kAccountLength),
                       random_string(kPrintable, kPasswordLength));
}

}  // namespace cdnexpose
