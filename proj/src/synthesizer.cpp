#include <vizform/error.hpp>
#include <vizform/synthesizer.hpp>

#include <algorithm>
#include <cctype>
#include <functional>
#include <unordered_map>

namespace vizform {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// Distinct PivotWider output columns allowed per name column.
constexpr std::size_t kMaxWiderNames = 16;
// PivotLonger is only enumerated below this width, melting at most kMaxMelt columns.
constexpr std::size_t kMaxLongerWidth = 8;
constexpr std::size_t kMaxMelt = 6;

auto pad(std::size_t n) -> std::string {
    auto s = std::to_string(n);
    return s.size() >= 3 ? s : std::string(3 - s.size(), '0') + s;
}

auto lower(std::string_view s) -> std::string {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// An output column "fits" an example column name when one name contains the
// other, ignoring case ("Atlanta" for "Atlanta Temp").
auto names_related(std::string_view example_name, std::string_view column_name) -> bool {
    auto a = lower(trim(example_name));
    auto b = lower(trim(column_name));
    return !a.empty() && !b.empty() && (a.find(b) != std::string::npos || b.find(a) != std::string::npos);
}

auto row_key(const Row& row, const std::vector<std::size_t>& cols) -> std::string {
    std::string key;
    for (auto c : cols) {
        key += row[c].canonical_key();
        key.push_back('\x1f');
    }
    return key;
}

void add_segments(std::unordered_set<std::string>& out, const std::string& text) {
    std::vector<std::size_t> starts{0};
    std::vector<std::size_t> ends{text.size()};
    for (std::size_t i = 0; i < text.size(); ++i) {
        for (auto delim : kDelimiters) {
            if (text.compare(i, delim.size(), delim) == 0) {
                ends.push_back(i);
                starts.push_back(i + delim.size());
            }
        }
    }
    if (starts.size() == 1) {
        out.emplace(trim(text));
        return;
    }
    for (auto s : starts) {
        for (auto e : ends) {
            if (s <= e) {
                out.emplace(trim(std::string_view(text).substr(s, e - s)));
            }
        }
    }
}

struct Placeholders {
    static auto key(int depth) -> std::string { return "#key" + std::to_string(depth); }
    static auto value(int depth) -> std::string { return "#val" + std::to_string(depth); }
    static auto left(int depth) -> std::string { return "#left" + std::to_string(depth); }
    static auto right(int depth) -> std::string { return "#right" + std::to_string(depth); }

    static auto all(int max_depth) -> std::vector<std::string> {
        std::vector<std::string> out;
        for (int d = 1; d <= max_depth; ++d) {
            out.push_back(key(d));
            out.push_back(value(d));
            out.push_back(left(d));
            out.push_back(right(d));
        }
        return out;
    }

    static auto is_placeholder(const std::string& name) -> bool {
        return name.size() > 1 && name[0] == '#' &&
               (name.rfind("#key", 0) == 0 || name.rfind("#val", 0) == 0 || name.rfind("#left", 0) == 0 ||
                name.rfind("#right", 0) == 0);
    }
};

struct Node {
    ProgramPtr program;
    Table table;
    // Operator ranks and operand indices, innermost operator first.
    std::string ops;
    std::string params;
};

using Clock = std::chrono::steady_clock;

class Search {
public:
    Search(const Table& t, const ExampleRelation& e, const SynthesisLimits& limits, SynthesisStats& stats)
        : t_(t), e_(e), limits_(limits), stats_(stats), deadline_(Clock::now() + limits.timeout) {
        for (const auto& n : e.columns) {
            extra_inventory_.push_back(n);
        }
        for (const auto& p : Placeholders::all(limits.max_depth)) {
            extra_inventory_.push_back(p);
        }
    }

    auto run() -> std::vector<SynthesisResult> {
        std::vector<Node> frontier;
        Node root{input_ref(), t_, "0", ""};
        consider(root);
        if (keep_extending(root, 0)) {
            frontier.push_back(std::move(root));
        }
        try {
            for (int depth = 1; depth <= limits_.max_depth && !frontier.empty(); ++depth) {
                if (distinct_results() >= static_cast<std::size_t>(limits_.max_candidates)) {
                    break;
                }
                std::vector<Node> next;
                for (const auto& parent : frontier) {
                    expand(parent, depth, [&](Node child) {
                        consider(child);
                        if (depth < limits_.max_depth && keep_extending(child, depth)) {
                            next.push_back(std::move(child));
                        }
                    });
                }
                frontier = std::move(next);
            }
        } catch (const Error& err) {
            // Out of time: programs already verified are still worth returning.
            if (err.code() != ErrorCode::timeout || found_.empty()) {
                throw;
            }
        }
        return finish();
    }

private:
    void check_deadline() {
        if (Clock::now() > deadline_) {
            throw Error(ErrorCode::timeout, "synthesis exceeded its time budget");
        }
    }

    auto keep_extending(const Node& node, int depth) -> bool {
        if (!limits_.prune) {
            return true;
        }
        // (a) every example value must stay reachable from this intermediate table.
        auto inventory = abstract_inventory(node.table);
        inventory.insert(extra_inventory_.begin(), extra_inventory_.end());
        if (!unreachable_values(e_, inventory).empty()) {
            ++stats_.pruned;
            return false;
        }
        // (b) the remaining operators must be able to host every example column.
        auto remaining = static_cast<std::size_t>(limits_.max_depth - depth);
        auto widest = node.table.column_count() + remaining * (kMaxWiderNames - 2);
        if (e_.columns.size() > widest) {
            ++stats_.pruned;
            return false;
        }
        return true;
    }

    void emit(const Node& parent, ProgramPtr op_on_input, char op_rank, const std::string& operands,
              const std::function<void(Node)>& sink) {
        check_deadline();
        ++stats_.evaluated;
        Table out;
        try {
            out = eval_program(*op_on_input, parent.table);
        } catch (const Error&) {
            return;
        }
        auto program = with_child(*op_on_input, parent.program);
        auto ops = parent.ops == "0" ? std::string(1, op_rank) : parent.ops + op_rank;
        auto params = parent.params.empty() ? operands : parent.params + "|" + operands;
        sink(Node{std::move(program), std::move(out), std::move(ops), std::move(params)});
    }

    void expand(const Node& parent, int depth, const std::function<void(Node)>& sink) {
        const auto& in = parent.table;
        const auto& cols = in.columns();
        auto n = cols.size();
        // pivot_wider over ordered (name, value) pairs
        for (std::size_t i = 0; i < n; ++i) {
            std::unordered_set<std::string> names;
            for (const auto& r : in.rows()) {
                names.insert(generated_column_name(r[i]));
            }
            if (names.empty() || names.size() > kMaxWiderNames) {
                continue;
            }
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) {
                    emit(parent, pivot_wider(input_ref(), cols[i].name, cols[j].name), '1', pad(i) + pad(j), sink);
                }
            }
        }
        // pivot_longer: larger melts first, lexicographic within a size
        if (n >= 2 && n <= kMaxLongerWidth) {
            for (auto size = std::min(kMaxMelt, n - 1); size >= 1; --size) {
                std::vector<std::size_t> pick(size);
                for (std::size_t k = 0; k < size; ++k) {
                    pick[k] = k;
                }
                while (true) {
                    std::vector<std::string> listed;
                    std::string comp = pad(99 - size);
                    for (auto k : pick) {
                        listed.push_back(cols[k].name);
                        comp += pad(k);
                    }
                    emit(parent,
                         pivot_longer(input_ref(), std::move(listed), Placeholders::key(depth),
                                      Placeholders::value(depth)),
                         '2', comp, sink);
                    // next combination
                    std::size_t k = size;
                    while (k > 0 && pick[k - 1] == n - size + (k - 1)) {
                        --k;
                    }
                    if (k == 0) {
                        break;
                    }
                    ++pick[k - 1];
                    for (auto m = k; m < size; ++m) {
                        pick[m] = pick[m - 1] + 1;
                    }
                }
            }
        }
        // separate / separate_rows on text columns, delimiters present in the data
        for (int op = 3; op <= 4; ++op) {
            for (std::size_t i = 0; i < n; ++i) {
                if (cols[i].type != SemanticType::text) {
                    continue;
                }
                for (std::size_t k = 0; k < kDelimiters.size(); ++k) {
                    auto delim = kDelimiters[k];
                    bool present = std::any_of(in.rows().begin(), in.rows().end(), [&](const Row& r) {
                        return r[i].is_text() && r[i].as_text().find(delim) != std::string::npos;
                    });
                    if (!present) {
                        continue;
                    }
                    auto comp = pad(i) + pad(k);
                    auto p = op == 3 ? separate(input_ref(), cols[i].name, Placeholders::left(depth),
                                                Placeholders::right(depth), std::string(delim))
                                     : separate_rows(input_ref(), cols[i].name, std::string(delim));
                    emit(parent, std::move(p), static_cast<char>('0' + op), comp, sink);
                }
            }
        }
    }

    void consider(const Node& node) {
        if (node.table.column_count() < e_.columns.size()) {
            return;
        }
        auto binding = check_subsumption(e_, node.table);
        if (!binding) {
            return;
        }
        auto result = finalize(node, *binding);
        auto key = serialize_table(result.output, TableFormat::csv);
        found_.push_back(std::move(result));
        found_keys_.push_back(std::move(key));
    }

    auto distinct_results() const -> std::size_t {
        return std::unordered_set<std::string>(found_keys_.begin(), found_keys_.end()).size();
    }

    // Renames placeholder columns: bound ones take the example column name,
    // others a tidy default. Falls back to the raw program if renaming breaks it.
    auto finalize(const Node& node, const std::vector<std::string>& binding) -> SynthesisResult {
        SynthesisResult raw{node.program, binding, rank_of(node, binding), node.table};
        std::vector<std::string> placeholders;
        collect_placeholders(*node.program, placeholders);
        if (placeholders.empty()) {
            return raw;
        }
        std::unordered_set<std::string> taken;
        for (const auto& c : node.table.columns()) {
            if (!Placeholders::is_placeholder(c.name)) {
                taken.insert(c.name);
            }
        }
        std::unordered_map<std::string, std::string> rename;
        for (const auto& ph : placeholders) {
            std::string target;
            auto bound = std::find(binding.begin(), binding.end(), ph);
            if (bound != binding.end()) {
                target = e_.columns[static_cast<std::size_t>(bound - binding.begin())];
            }
            if (target.empty() || taken.count(target)) {
                target = fresh(default_name(ph), taken);
            }
            taken.insert(target);
            rename[ph] = target;
        }
        try {
            auto program = rename_params(*node.program, rename);
            auto out = eval_program(*program, t_);
            if (auto b = check_subsumption(e_, out)) {
                return SynthesisResult{program, *b, rank_of(node, *b), std::move(out)};
            }
        } catch (const Error&) {
        }
        return raw;
    }

    // Within one operator sequence, bindings whose column names echo the
    // example's names rank ahead of operand order.
    auto rank_of(const Node& node, const std::vector<std::string>& binding) const -> RankKey {
        std::size_t unrelated = 0;
        for (std::size_t j = 0; j < binding.size(); ++j) {
            unrelated += names_related(e_.columns[j], binding[j]) ? 0 : 1;
        }
        return RankKey{ast_size(*node.program), node.ops + "/" + pad(unrelated) + "/" + node.params};
    }

    static auto default_name(const std::string& ph) -> std::string {
        if (ph.rfind("#key", 0) == 0) return "name";
        if (ph.rfind("#val", 0) == 0) return "value";
        if (ph.rfind("#left", 0) == 0) return "part_1";
        return "part_2";
    }

    static auto fresh(const std::string& base, const std::unordered_set<std::string>& taken) -> std::string {
        if (!taken.count(base)) {
            return base;
        }
        for (int k = 2;; ++k) {
            auto candidate = base + "_" + std::to_string(k);
            if (!taken.count(candidate)) {
                return candidate;
            }
        }
    }

    static void collect_placeholders(const Program& p, std::vector<std::string>& out) {
        if (auto c = child_of(p)) {
            collect_placeholders(*c, out);
        }
        auto add = [&](const std::string& n) {
            if (Placeholders::is_placeholder(n) && std::find(out.begin(), out.end(), n) == out.end()) {
                out.push_back(n);
            }
        };
        std::visit(overloaded{[](const InputRef&) {},
                              [&](const PivotLonger& op) {
                                  add(op.key_name);
                                  add(op.value_name);
                              },
                              [](const PivotWider&) {},
                              [&](const Separate& op) {
                                  add(op.left_name);
                                  add(op.right_name);
                              },
                              [](const SeparateRows&) {}},
                   p.node);
    }

    static auto rename_params(const Program& p, const std::unordered_map<std::string, std::string>& map)
        -> ProgramPtr {
        auto r = [&](const std::string& n) {
            auto it = map.find(n);
            return it == map.end() ? n : it->second;
        };
        auto child = child_of(p);
        if (!child) {
            return input_ref();
        }
        auto c = rename_params(*child, map);
        return std::visit(
            overloaded{[&](const InputRef&) { return input_ref(); },
                       [&](const PivotLonger& op) {
                           std::vector<std::string> cols;
                           for (const auto& n : op.columns) {
                               cols.push_back(r(n));
                           }
                           return pivot_longer(c, std::move(cols), r(op.key_name), r(op.value_name));
                       },
                       [&](const PivotWider& op) { return pivot_wider(c, r(op.name_col), r(op.value_col)); },
                       [&](const Separate& op) {
                           return separate(c, r(op.col), r(op.left_name), r(op.right_name), op.delimiter);
                       },
                       [&](const SeparateRows& op) { return separate_rows(c, r(op.col), op.delimiter); }},
            p.node);
    }

    auto finish() -> std::vector<SynthesisResult> {
        std::vector<std::size_t> order(found_.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return found_[a].rank < found_[b].rank; });
        std::vector<SynthesisResult> out;
        std::unordered_set<std::string> seen;
        for (auto i : order) {
            if (out.size() >= static_cast<std::size_t>(limits_.max_candidates)) {
                break;
            }
            if (seen.insert(found_keys_[i]).second) {
                out.push_back(std::move(found_[i]));
            }
        }
        return out;
    }

    const Table& t_;
    const ExampleRelation& e_;
    const SynthesisLimits& limits_;
    SynthesisStats& stats_;
    Clock::time_point deadline_;
    std::vector<std::string> extra_inventory_;
    std::vector<SynthesisResult> found_;
    std::vector<std::string> found_keys_;
};

auto nearest(const std::string& value, const std::unordered_set<std::string>& inventory, std::size_t count)
    -> std::vector<std::string> {
    std::vector<std::pair<std::size_t, std::string>> scored;
    scored.reserve(inventory.size());
    for (const auto& v : inventory) {
        scored.emplace_back(levenshtein(value, v), v);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < count; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

}  // namespace

void validate_example(const ExampleRelation& e) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_example, msg); };
    if (e.columns.empty()) {
        fail("example relation needs at least one column");
    }
    std::unordered_set<std::string> names;
    for (const auto& c : e.columns) {
        if (c.empty() || !names.insert(c).second) {
            fail("example relation column names must be unique and non-empty");
        }
    }
    if (e.rows.size() < 2) {
        fail("example relation needs at least two rows");
    }
    for (const auto& r : e.rows) {
        if (r.size() != e.columns.size()) {
            fail("example relation rows must match its columns");
        }
        for (const auto& v : r) {
            if (v.is_null()) {
                fail("example relation values must be non-empty");
            }
        }
    }
}

auto check_subsumption(const ExampleRelation& e, const Table& out) -> std::optional<std::vector<std::string>> {
    auto k = e.columns.size();
    if (k == 0 || k > out.column_count() || e.rows.size() > out.row_count()) {
        return std::nullopt;
    }
    // Per-column multisets, restricted to the values the example uses.
    std::unordered_map<std::string, std::size_t> needed;
    std::vector<std::vector<std::size_t>> e_counts(k);
    for (const auto& r : e.rows) {
        for (std::size_t j = 0; j < k; ++j) {
            auto id = needed.emplace(r[j].canonical_key(), needed.size()).first->second;
            e_counts[j].resize(needed.size(), 0);
            ++e_counts[j][id];
        }
    }
    // Canonical keys of every output cell, computed once.
    std::vector<std::vector<std::string>> cell_keys(out.row_count());
    std::vector<std::vector<std::size_t>> out_counts(out.column_count(), std::vector<std::size_t>(needed.size(), 0));
    for (std::size_t i = 0; i < out.row_count(); ++i) {
        const auto& r = out.rows()[i];
        cell_keys[i].reserve(out.column_count());
        for (std::size_t c = 0; c < out.column_count(); ++c) {
            cell_keys[i].push_back(r[c].canonical_key());
            if (auto it = needed.find(cell_keys[i].back()); it != needed.end()) {
                ++out_counts[c][it->second];
            }
        }
    }
    std::vector<std::vector<std::size_t>> candidates(k);
    for (std::size_t j = 0; j < k; ++j) {
        auto fits = [&](std::size_t c) {
            for (std::size_t id = 0; id < e_counts[j].size(); ++id) {
                if (out_counts[c][id] < e_counts[j][id]) {
                    return false;
                }
            }
            return true;
        };
        if (auto exact = out.find_column(e.columns[j]); exact && fits(*exact)) {
            candidates[j].push_back(*exact);
        }
        for (std::size_t c = 0; c < out.column_count(); ++c) {
            if (out.columns()[c].name != e.columns[j] && fits(c)) {
                candidates[j].push_back(c);
            }
        }
        if (candidates[j].empty()) {
            return std::nullopt;
        }
    }
    std::vector<std::string> e_keys;
    std::vector<std::size_t> all(k);
    for (std::size_t j = 0; j < k; ++j) {
        all[j] = j;
    }
    for (const auto& r : e.rows) {
        e_keys.push_back(row_key(r, all));
    }
    std::vector<std::size_t> assignment(k);
    std::vector<bool> used(out.column_count(), false);
    std::function<bool(std::size_t)> dfs = [&](std::size_t j) -> bool {
        if (j == k) {
            std::unordered_map<std::string, std::size_t> bag;
            for (const auto& keys : cell_keys) {
                std::string key;
                for (auto c : assignment) {
                    key += keys[c];
                    key.push_back('\x1f');
                }
                ++bag[key];
            }
            for (const auto& key : e_keys) {
                auto it = bag.find(key);
                if (it == bag.end() || it->second == 0) {
                    return false;
                }
                --it->second;
            }
            return true;
        }
        for (auto c : candidates[j]) {
            if (used[c]) {
                continue;
            }
            used[c] = true;
            assignment[j] = c;
            if (dfs(j + 1)) {
                return true;
            }
            used[c] = false;
        }
        return false;
    };
    if (!dfs(0)) {
        return std::nullopt;
    }
    std::vector<std::string> binding;
    for (auto c : assignment) {
        binding.push_back(out.columns()[c].name);
    }
    return binding;
}

auto abstract_inventory(const Table& t) -> std::unordered_set<std::string> {
    std::unordered_set<std::string> out{"NA"};
    for (const auto& c : t.columns()) {
        out.insert(c.name);
        add_segments(out, c.name);
    }
    for (const auto& r : t.rows()) {
        for (const auto& v : r) {
            if (v.is_null()) {
                continue;
            }
            auto key = v.canonical_key();
            auto text = v.render();
            add_segments(out, text);
            if (key != text) {
                out.insert(key);
                add_segments(out, key);
            }
        }
    }
    return out;
}

auto unreachable_values(const ExampleRelation& e, const std::unordered_set<std::string>& inventory)
    -> std::vector<std::string> {
    std::vector<std::string> out;
    for (const auto& r : e.rows) {
        for (const auto& v : r) {
            auto key = v.canonical_key();
            if (!inventory.count(key) && std::find(out.begin(), out.end(), key) == out.end()) {
                out.push_back(std::move(key));
            }
        }
    }
    return out;
}

auto levenshtein(std::string_view a, std::string_view b) -> std::size_t {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) {
        prev[j] = j;
    }
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

auto synthesize(const Table& t, const ExampleRelation& e, const SynthesisLimits& limits, SynthesisStats* stats)
    -> std::vector<SynthesisResult> {
    validate_example(e);
    if (limits.max_depth < 0 || limits.max_candidates <= 0 || limits.timeout.count() <= 0) {
        throw Error(ErrorCode::invalid_example, "synthesis limits must be positive");
    }
    SynthesisStats local;
    Search search(t, e, limits, stats ? *stats : local);
    std::vector<SynthesisResult> results;
    try {
        results = search.run();
    } catch (const Error& err) {
        if (err.code() != ErrorCode::timeout) {
            throw;
        }
        throw Error(ErrorCode::timeout, err.what(), {{"timeout_ms", limits.timeout.count()}});
    }
    if (!results.empty()) {
        return results;
    }
    auto inventory = abstract_inventory(t);
    auto missing = unreachable_values(e, inventory);
    nlohmann::json suggestions = nlohmann::json::object();
    for (const auto& m : missing) {
        suggestions[m] = nearest(m, inventory, 3);
    }
    std::string msg = "no reshaping program produces the example relation";
    if (!missing.empty()) {
        msg += "; values not found in the table: ";
        for (std::size_t i = 0; i < missing.size(); ++i) {
            msg += (i ? ", " : "") + missing[i];
        }
    }
    throw Error(ErrorCode::no_program, msg, {{"unreachable", missing}, {"suggestions", suggestions}});
}

}  // namespace vizform
