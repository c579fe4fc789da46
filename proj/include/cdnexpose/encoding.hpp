#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace cdnexpose {

enum class Base64Alphabet { standard, url_safe };

std::string base64_encode(std::string_view bytes, Base64Alphabet alphabet = Base64Alphabet::standard,
                          bool pad = true);

// Accepts either alphabet and optional padding; nullopt on malformed input.
std::optional<std::string> base64_decode(std::string_view text);

// Decodes %XX escapes; '+' becomes a space only when plus_is_space is set.
// nullopt on a malformed escape.
std::optional<std::string> percent_decode(std::string_view text, bool plus_is_space);

// Escapes everything except unreserved characters (RFC 3986) and maps space
// to '+', the application/x-www-form-urlencoded convention.
std::string form_encode(std::string_view bytes);

// Body of a JSON string literal (without quotes) decoded to UTF-8.
std::optional<std::string> json_unescape(std::string_view text);

std::string json_escape(std::string_view bytes);

}  // namespace cdnexpose
