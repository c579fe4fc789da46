#pragma once

#include <string>

#include "cdnexpose/errors.hpp"

namespace cdnexpose {

// Fake login credentials for a single scan.
class Credentials {
public:
    static constexpr std::size_t kAccountLength = 24;
    static constexpr std::size_t kPasswordLength = 16;

    // Throws InvariantError unless both are non-empty and the password has at
    // least 16 characters.
    Credentials(std::string account, std::string password);

    // Draws a fresh pair from the OpenSSL CSPRNG: 24 lowercase alphanumerics
    // for the account and 16 printable ASCII characters for the password.
    static Credentials generate();

    const std::string& account() const { return account_; }
    const std::string& password() const { return password_; }
    std::string email() const {
        return account_.find('@') == std::string::npos ? account_ + "@example.com" : account_;
    }

    bool operator==(const Credentials&) const = default;

private:
    std::string account_;
    std::string password_;
};

}  // namespace cdnexpose
