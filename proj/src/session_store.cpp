#include <vizform/session_store.hpp>

#include <vizform/error.hpp>

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

namespace vizform {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    auto fail = [&](const std::string& what) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw Error(ErrorCode::io_error, what + " " + path.string(), {{"path", path.string()}});
    };
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        fail("cannot create");
    }
    std::size_t done = 0;
    while (done < content.size()) {
        auto n = ::write(fd, content.data() + done, content.size() - done);
        if (n < 0) {
            ::close(fd);
            fail("cannot write");
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        fail("cannot flush");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fail("cannot replace");
    }
}

auto read_file(const fs::path& path) -> std::string {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot read " + path.string(), {{"path", path.string()}});
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

auto dump_session(const Session& s) -> std::string {
    return s.to_json().dump(1) + "\n";
}

auto load_session_file(const fs::path& path) -> Session {
    auto text = read_file(path);
    auto doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        throw Error(ErrorCode::malformed_input, "session file is not JSON: " + path.string());
    }
    return Session::from_json(doc);
}

auto new_session_id() -> std::string {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char hex[] = "0123456789abcdef";
    std::string id = "s";
    auto bits = rng();
    for (int i = 0; i < 16; ++i) {
        id.push_back(hex[(bits >> (i * 4)) & 0xf]);
    }
    return id;
}

auto valid_session_id(const std::string& id) -> bool {
    return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '-' || c == '_';
    });
}

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
        throw Error(ErrorCode::io_error, "cannot create data directory " + dir_.string());
    }
}

auto SessionStore::path_for(const std::string& id) const -> fs::path {
    return dir_ / (id + ".session.json");
}

auto SessionStore::exists(const std::string& id) const -> bool {
    return valid_session_id(id) && fs::exists(path_for(id));
}

void SessionStore::save(const Session& s) const {
    write_file_atomic(path_for(s.id()), dump_session(s));
}

auto SessionStore::load(const std::string& id) const -> Session {
    if (!exists(id)) {
        throw Error(ErrorCode::not_found, "no session '" + id + "'", {{"session", id}});
    }
    return load_session_file(path_for(id));
}

auto SessionStore::list() const -> std::vector<std::string> {
    std::vector<std::string> ids;
    const std::string suffix = ".session.json";
    for (const auto& entry : fs::directory_iterator(dir_)) {
        auto name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace vizform
