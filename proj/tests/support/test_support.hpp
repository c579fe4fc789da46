#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdnexpose/snapshot.hpp"

namespace testsupport {

std::string fixtures_dir();
std::string corpus_dir();
std::string data_dir();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Unique directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

// Node description for page(): {"id", "tag", "attrs", "text", "top", ...}.
// Missing geometry defaults to a visible 100x20 box at top 0.
nlohmann::json node(int id, const std::string& tag, nlohmann::json attrs = nlohmann::json::array(),
                    const std::string& text = "", double top = 0, std::vector<int> children = {});

// Snapshot document rooted at a body node (id 1) holding the given nodes as
// direct children.
nlohmann::json page_doc(const std::vector<nlohmann::json>& nodes, int vw = 1920, int vh = 1000,
                        const std::string& url = "https://www.test.example/");
cdnexpose::PageSnapshot page(const std::vector<nlohmann::json>& nodes, int vw = 1920,
                             int vh = 1000);

std::string random_bytes(std::mt19937_64& rng, std::size_t n);
std::string random_printable(std::mt19937_64& rng, std::size_t n);

// Corpus site directories, sorted.
std::vector<std::string> corpus_sites();

}  // namespace testsupport
