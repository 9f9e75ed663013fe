#pragma once

#include <vizform/session.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace vizform {

/// Writes `content` to a sibling temp file, flushes it and renames it over
/// `path`, so readers see either the old or the new document.
/// Throws Error(io_error).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
/// Throws Error(io_error).
auto read_file(const std::filesystem::path& path) -> std::string;

/// One JSON document per session under a data directory.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir);

    [[nodiscard]] auto dir() const -> const std::filesystem::path& { return dir_; }
    [[nodiscard]] auto path_for(const std::string& id) const -> std::filesystem::path;
    [[nodiscard]] auto exists(const std::string& id) const -> bool;
    void save(const Session& s) const;
    /// Throws Error(not_found | malformed_input).
    [[nodiscard]] auto load(const std::string& id) const -> Session;
    [[nodiscard]] auto list() const -> std::vector<std::string>;

private:
    std::filesystem::path dir_;
};

/// Serializes a session the way the store and the CLI write it.
auto dump_session(const Session& s) -> std::string;
/// Throws Error(io_error | malformed_input).
auto load_session_file(const std::filesystem::path& path) -> Session;

/// Session ids are short random hex strings safe to use as file names.
auto new_session_id() -> std::string;
auto valid_session_id(const std::string& id) -> bool;

}  // namespace vizform
