#pragma once

#include <vizform/error.hpp>
#include <vizform/reshape.hpp>
#include <vizform/synthesizer.hpp>
#include <vizform/table.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <set>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace vizform::testing {

inline auto read_file(const std::string& path) -> std::string {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// A scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& prefix = "vizform-test-") {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / (prefix + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    auto operator=(const TempDir&) -> TempDir& = delete;
};

inline auto fixture_path(const std::string& name) -> std::string {
    return std::string(VIZFORM_FIXTURE_DIR) + "/" + name;
}

inline auto load_fixture(const std::string& name) -> Table {
    return parse_table(read_file(fixture_path(name)), TableFormat::csv, name);
}

/// The canonical weather fixture: (Date, City, Temperature) for Seattle and
/// Atlanta over three days.
inline auto t0() -> Table {
    return load_fixture("t0.csv").renamed("T0");
}

/// The {mark, encoding.*.field, encoding.*.type} projection of a Vega-Lite document.
inline auto projection(const nlohmann::json& doc) -> nlohmann::json {
    nlohmann::json out = {{"mark", doc.at("mark")}, {"encoding", nlohmann::json::object()}};
    for (auto it = doc.at("encoding").begin(); it != doc.at("encoding").end(); ++it) {
        nlohmann::json p = nlohmann::json::object();
        for (const char* key : {"field", "type"}) {
            if (it.value().contains(key)) p[key] = it.value()[key];
        }
        out["encoding"][it.key()] = p;
    }
    return out;
}

/// The published scatter of temperature by date, colored by city.
inline auto published_weather_scatter() -> nlohmann::json {
    return nlohmann::json::parse(R"({ "mark": "circle", "encoding" : { "x": {"field": "Date", "type": "temporal"},
        "y": {"field": "Temperature", "type": "quantitative"},  "color": {"field": "City"} } })");
}

/// The published scatter of Atlanta against Seattle temperatures.
inline auto published_pivot_scatter() -> nlohmann::json {
    return nlohmann::json::parse(R"({ "mark": "circle",  "encoding" : { "x": {"field": "Seattle Temp", "type": "quantitative"},
        "y": {"field": "Atlanta Temp", "type": "quantitative"} } })");
}

inline auto d(int y, unsigned m, unsigned day) -> Value {
    return Value(make_date(y, m, day));
}

/// Random table generator used by the property suites: a mix of text,
/// integer, float, date and boolean columns with occasional nulls.
class TableGenerator {
public:
    explicit TableGenerator(std::uint32_t seed) : rng_(seed) {}

    auto rng() -> std::mt19937& { return rng_; }

    auto uniform(int lo, int hi) -> int { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    auto random_value(SemanticType type, double null_rate) -> Value {
        if (std::bernoulli_distribution(null_rate)(rng_)) {
            return Value::null();
        }
        switch (type) {
            case SemanticType::boolean: return Value(uniform(0, 1) == 1);
            case SemanticType::integer: return Value(uniform(-50, 120));
            case SemanticType::floating: return Value(uniform(-400, 400) / 4.0 + 0.25);
            case SemanticType::date: return Value(Date{18262 + uniform(0, 60)});
            case SemanticType::datetime: return Value(DateTime{1577836800LL + uniform(0, 100000)});
            case SemanticType::text: {
                static const char* words[] = {"alpha", "beta", "gamma", "delta", "x y", "p-q", "a,b", "z"};
                return Value(std::string(words[uniform(0, 7)]));
            }
        }
        return Value::null();
    }

    auto random_table(int max_cols, int max_rows, double null_rate = 0.1) -> Table {
        int ncols = uniform(1, max_cols);
        int nrows = uniform(0, max_rows);
        std::vector<Column> cols;
        for (int c = 0; c < ncols; ++c) {
            auto type = static_cast<SemanticType>(uniform(0, 5));
            cols.push_back(Column{"c" + std::to_string(c), type});
        }
        std::vector<Row> rows;
        for (int r = 0; r < nrows; ++r) {
            Row row;
            for (const auto& c : cols) {
                row.push_back(random_value(c.type, null_rate));
            }
            rows.push_back(std::move(row));
        }
        return Table("random", std::move(cols), std::move(rows));
    }

private:
    std::mt19937 rng_;
};

}  // namespace vizform::testing

namespace vizform::testing {

/// Independent oracle for E contained in out: tries every injective column
/// binding and compares sorted row keys.
inline auto naive_subsumes(const ExampleRelation& e, const Table& out) -> bool {
    auto k = e.columns.size();
    auto n = out.column_count();
    if (k > n) {
        return false;
    }
    std::vector<std::string> want;
    for (const auto& r : e.rows) {
        std::string key;
        for (const auto& v : r) key += v.canonical_key() + "\x1f";
        want.push_back(key);
    }
    std::sort(want.begin(), want.end());
    // column c can host example column j only if it holds all of j's values
    auto hosts = [&](std::size_t j, std::size_t c) {
        std::set<std::string> have;
        for (const auto& r : out.rows()) have.insert(r[c].canonical_key());
        for (const auto& r : e.rows) {
            if (!have.count(r[j].canonical_key())) return false;
        }
        return true;
    };
    std::vector<std::size_t> pick(k);
    std::function<bool(std::size_t)> rec = [&](std::size_t j) -> bool {
        if (j == k) {
            std::vector<std::string> have;
            for (const auto& r : out.rows()) {
                std::string key;
                for (auto c : pick) key += r[c].canonical_key() + "\x1f";
                have.push_back(key);
            }
            std::sort(have.begin(), have.end());
            return std::includes(have.begin(), have.end(), want.begin(), want.end());
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (std::find(pick.begin(), pick.begin() + static_cast<long>(j), c) != pick.begin() + static_cast<long>(j)) {
                continue;
            }
            if (!hosts(j, c)) continue;
            pick[j] = c;
            if (rec(j + 1)) return true;
        }
        return false;
    };
    return rec(0);
}

/// One synthesis problem drawn from a random program's output.
struct CorpusInstance {
    Table table;
    ProgramPtr program;
    ExampleRelation example;
};

/// Picks a random operator applicable to `in`, respecting the same operand
/// caps the synthesizer enumerates under.
inline auto sample_operator(TableGenerator& gen, const Table& in, int depth) -> ProgramPtr {
    const auto& cols = in.columns();
    auto n = static_cast<int>(cols.size());
    auto suffix = std::to_string(depth);
    for (int attempt = 0; attempt < 20; ++attempt) {
        switch (gen.uniform(0, 3)) {
            case 0: {
                if (n < 2 || n > 8) break;
                std::vector<std::string> listed;
                for (const auto& c : cols) {
                    if (static_cast<int>(listed.size()) < std::min(6, n - 1) && gen.uniform(0, 1) == 1) {
                        listed.push_back(c.name);
                    }
                }
                if (listed.empty()) listed.push_back(cols[gen.uniform(0, n - 1)].name);
                return pivot_longer(input_ref(), listed, "#key" + suffix, "#val" + suffix);
            }
            case 1: {
                if (n < 2) break;
                int a = gen.uniform(0, n - 1);
                int b = gen.uniform(0, n - 1);
                if (a == b) break;
                std::vector<std::string> names;
                for (const auto& r : in.rows()) {
                    auto name = generated_column_name(r[a]);
                    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
                }
                if (names.size() > 16) break;
                return pivot_wider(input_ref(), cols[a].name, cols[b].name);
            }
            default: {
                std::vector<int> text_cols;
                for (int c = 0; c < n; ++c) {
                    if (cols[c].type == SemanticType::text) text_cols.push_back(c);
                }
                if (text_cols.empty()) break;
                auto c = text_cols[gen.uniform(0, static_cast<int>(text_cols.size()) - 1)];
                std::vector<std::string> present;
                for (auto delim : kDelimiters) {
                    for (const auto& r : in.rows()) {
                        if (r[c].is_text() && r[c].as_text().find(delim) != std::string::npos) {
                            present.emplace_back(delim);
                            break;
                        }
                    }
                }
                if (present.empty()) break;
                auto delim = present[gen.uniform(0, static_cast<int>(present.size()) - 1)];
                if (gen.uniform(0, 1) == 0) {
                    return separate(input_ref(), cols[c].name, "#left" + suffix, "#right" + suffix, delim);
                }
                return separate_rows(input_ref(), cols[c].name, delim);
            }
        }
    }
    return nullptr;
}

/// Tables of at most 6 columns and 30 rows with a low-cardinality category
/// column and delimiter-bearing text, so every operator has something to do.
inline auto corpus_table(TableGenerator& gen) -> Table {
    int ncols = gen.uniform(2, 6);
    int nrows = gen.uniform(2, 30);
    std::vector<Column> cols;
    cols.push_back({"id", SemanticType::integer});
    static const char* cats[] = {"north", "south", "east", "west"};
    static const char* pairs[] = {"a-b", "c-d", "x y", "p,q", "m/n", "solo", "u_v", "i:j"};
    std::vector<int> kinds;
    for (int c = 1; c < ncols; ++c) {
        int kind = gen.uniform(0, 3);
        kinds.push_back(kind);
        SemanticType type = kind == 0 ? SemanticType::text
                            : kind == 1 ? SemanticType::text
                            : kind == 2 ? SemanticType::integer
                                        : SemanticType::date;
        cols.push_back({"c" + std::to_string(c), type});
    }
    int ncats = gen.uniform(1, 4);
    std::vector<Row> rows;
    for (int r = 0; r < nrows; ++r) {
        Row row{Value(r)};
        for (int kind : kinds) {
            switch (kind) {
                case 0: row.emplace_back(cats[gen.uniform(0, ncats - 1)]); break;
                case 1: row.emplace_back(pairs[gen.uniform(0, 7)]); break;
                case 2: row.emplace_back(gen.uniform(0, 40)); break;
                default: row.emplace_back(Date{18262 + gen.uniform(0, 9)}); break;
            }
        }
        rows.push_back(std::move(row));
    }
    return Table("corpus", std::move(cols), std::move(rows));
}

/// Samples a program of depth <= max_depth, evaluates it and draws an
/// example relation of 2..4 rows over 1..3 of its output columns.
inline auto sample_instance(TableGenerator& gen, int max_depth = 2) -> CorpusInstance {
    while (true) {
        auto table = corpus_table(gen);
        int depth = gen.uniform(0, max_depth);
        ProgramPtr program = input_ref();
        Table out = table;
        bool ok = true;
        for (int d = 1; d <= depth && ok; ++d) {
            auto op = sample_operator(gen, out, d);
            if (!op) {
                ok = false;
                break;
            }
            try {
                out = eval_program(*op, out);
                program = with_child(*op, program);
            } catch (const Error&) {
                ok = false;
            }
        }
        if (!ok || out.column_count() == 0) continue;
        int k = gen.uniform(1, std::min<int>(3, static_cast<int>(out.column_count())));
        std::vector<std::size_t> picked;
        while (static_cast<int>(picked.size()) < k) {
            auto c = static_cast<std::size_t>(gen.uniform(0, static_cast<int>(out.column_count()) - 1));
            if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
        }
        std::vector<std::size_t> eligible;
        for (std::size_t r = 0; r < out.row_count(); ++r) {
            bool full = std::all_of(picked.begin(), picked.end(), [&](auto c) { return !out.rows()[r][c].is_null(); });
            if (full) eligible.push_back(r);
        }
        if (eligible.size() < 2) continue;
        std::shuffle(eligible.begin(), eligible.end(), gen.rng());
        auto m = static_cast<std::size_t>(gen.uniform(2, std::min<int>(4, static_cast<int>(eligible.size()))));
        ExampleRelation e;
        for (std::size_t j = 0; j < picked.size(); ++j) {
            e.columns.push_back("e" + std::to_string(j));
        }
        for (std::size_t i = 0; i < m; ++i) {
            Row row;
            for (auto c : picked) row.push_back(out.rows()[eligible[i]][c]);
            e.rows.push_back(std::move(row));
        }
        return CorpusInstance{std::move(table), std::move(program), std::move(e)};
    }
}

}  // namespace vizform::testing
