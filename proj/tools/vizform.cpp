// vizform: batch interface to the synthesizer, formula generation and the
// formulate pipeline.
//
// Exit codes:
//   0  success
//   1  error (unreadable or malformed input, unknown column, backend failure, ...)
//   2  no reshaping program reproduces the example relation
//   3  formulate needs an example relation and none was given (--example)

#include <vizform/chart.hpp>
#include <vizform/codegen.hpp>
#include <vizform/error.hpp>
#include <vizform/formula.hpp>
#include <vizform/reshape.hpp>
#include <vizform/service.hpp>
#include <vizform/session.hpp>
#include <vizform/session_store.hpp>
#include <vizform/synthesizer.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vizform;

namespace {

constexpr int kExitError = 1;
constexpr int kExitNoProgram = 2;
constexpr int kExitNeedsExample = 3;
constexpr std::size_t kPreviewRows = 10;

auto load_csv(const fs::path& path) -> Table {
    return parse_table(read_file(path), TableFormat::csv, path.stem().string());
}

auto load_example(const fs::path& path) -> ExampleRelation {
    auto t = load_csv(path);
    ExampleRelation e;
    for (const auto& c : t.columns()) e.columns.push_back(c.name);
    e.rows = t.rows();
    return e;
}

/// Reads JSON from a file, or parses the argument itself when it starts with '{'.
auto load_json_arg(const std::string& arg) -> json {
    auto text = !arg.empty() && arg.front() == '{' ? arg : read_file(arg);
    auto j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw Error(ErrorCode::malformed_input, "'" + arg + "' is not valid JSON");
    }
    return j;
}

auto split_list(const std::string& s) -> std::vector<std::string> {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (auto t = trim(item); !t.empty()) out.emplace_back(t);
    }
    return out;
}

auto backend_config(const std::string& config_path, const std::string& backend) -> BackendConfig {
    BackendConfig config;
    if (!config_path.empty()) {
        auto j = load_json_arg(config_path);
        config = backend_config_from_json(j.contains("backend") ? j["backend"] : j);
    }
    if (backend == "offline") config.kind = BackendConfig::Kind::offline;
    if (backend == "remote") config.kind = BackendConfig::Kind::remote;
    return config;
}

void print_table(const Table& t, std::size_t limit) {
    auto preview = t.slice_rows(0, limit);
    std::cout << serialize_table(preview, TableFormat::csv);
    if (t.row_count() > limit) {
        std::cout << "... (" << t.row_count() - limit << " more rows)\n";
    }
}

// ---- synth ---------------------------------------------------------------------

struct SynthArgs {
    std::string table;
    std::string example;
    int max_depth = 2;
    bool as_json = false;
};

auto run_synth(const SynthArgs& a) -> int {
    auto t = load_csv(a.table);
    auto e = load_example(a.example);
    SynthesisLimits limits;
    limits.max_depth = a.max_depth;
    auto results = synthesize(t, e, limits);
    if (a.as_json) {
        auto list = json::array();
        for (const auto& r : results) {
            auto binding = json::object();
            for (std::size_t i = 0; i < e.columns.size(); ++i) binding[e.columns[i]] = r.binding[i];
            list.push_back({{"program", to_string(*r.program)},
                            {"binding", binding},
                            {"preview", table_to_json(r.output.slice_rows(0, kPreviewRows))}});
        }
        std::cout << json{{"programs", list}}.dump(2) << "\n";
        return 0;
    }
    for (std::size_t k = 0; k < results.size(); ++k) {
        const auto& r = results[k];
        std::cout << "#" << k + 1 << " " << to_string(*r.program) << "\n";
        for (std::size_t i = 0; i < e.columns.size(); ++i) {
            std::cout << "  " << e.columns[i] << " -> " << r.binding[i] << "\n";
        }
        print_table(r.output, kPreviewRows);
        std::cout << "\n";
    }
    return 0;
}

// ---- derive --------------------------------------------------------------------

struct DeriveArgs {
    std::string table;
    std::string sources;
    std::string description;
    std::string out;
    std::string backend;
    std::string config;
    int pick = 1;
    bool show_candidates = false;
};

auto run_derive(const DeriveArgs& a) -> int {
    auto t = load_csv(a.table);
    DerivationRequest req{a.description, {}, a.out};
    auto names = split_list(a.sources);
    for (const auto& name : names) {
        auto index = t.column_index(name);
        auto values = t.column_values(index);
        values.resize(std::min<std::size_t>(values.size(), 3));
        req.sources.push_back({name, t.columns()[index].type, std::move(values)});
    }
    auto backend = make_backend(backend_config(a.config, a.backend));
    auto candidates = generate_candidates(req, *backend);
    if (a.show_candidates) {
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            const auto& c = candidates[k];
            std::cerr << "[" << k + 1 << "] " << c.source_text << "  (" << to_string(c.origin) << ")\n";
            for (const auto& s : c.sample_outputs) {
                std::cerr << "    ";
                for (const auto& v : s.inputs) std::cerr << v.render() << " ";
                std::cerr << "-> " << s.output.render() << "\n";
            }
        }
    }
    if (a.pick < 1 || static_cast<std::size_t>(a.pick) > candidates.size()) {
        throw Error(ErrorCode::invalid_argument,
                    "--pick " + std::to_string(a.pick) + " is out of range; there are " +
                        std::to_string(candidates.size()) + " candidates");
    }
    const auto& chosen = candidates[static_cast<std::size_t>(a.pick) - 1];
    auto extended = apply_derivation(t, chosen.formula, names, a.out);
    std::cout << serialize_table(extended, TableFormat::csv);
    return 0;
}

// ---- formulate -----------------------------------------------------------------

struct FormulateArgs {
    std::string session;
    std::string chart;
    std::string example;
    std::string out_dir = ".";
    int save = 0;
};

void write_candidates(const std::vector<ChartCandidate>& candidates, const fs::path& dir) {
    fs::create_directories(dir);
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        auto stem = "candidate-" + std::to_string(k + 1);
        write_file_atomic(dir / (stem + ".table.csv"), serialize_table(candidates[k].table, TableFormat::csv));
        write_file_atomic(dir / (stem + ".spec.json"), candidates[k].spec.dump(2) + "\n");
        std::cout << stem << "  " << candidates[k].provenance.program << "  " << candidates[k].id << "\n";
    }
}

auto run_formulate(const FormulateArgs& a) -> int {
    auto session = load_session_file(a.session);
    auto request = chart_request_from_json(load_json_arg(a.chart));
    std::vector<ChartCandidate> candidates;
    if (!a.example.empty()) {
        auto outcome = session.formulate(request);
        candidates = outcome.ready() ? outcome.candidates : session.complete_formulate(request, load_example(a.example));
    } else {
        auto outcome = session.formulate(request);
        if (!outcome.ready()) {
            std::cerr << "an example relation is needed over: ";
            for (std::size_t i = 0; i < outcome.needs_example->columns.size(); ++i) {
                std::cerr << (i ? ", " : "") << outcome.needs_example->columns[i];
            }
            std::cerr << "\nprefilled rows:\n";
            auto described = outcome_to_json(outcome);
            for (const auto& row : described["prefilled"]) {
                std::cerr << "  " << row.dump() << "\n";
            }
            std::cerr << "pass them with --example <csv>\n";
            return kExitNeedsExample;
        }
        candidates = outcome.candidates;
    }
    write_candidates(candidates, a.out_dir);
    if (a.save > 0) {
        if (static_cast<std::size_t>(a.save) > candidates.size()) {
            throw Error(ErrorCode::invalid_argument, "--save " + std::to_string(a.save) + " is out of range");
        }
        auto chart = session.save_chart(candidates[static_cast<std::size_t>(a.save) - 1].id);
        write_file_atomic(a.session, dump_session(session));
        std::cout << "saved " << chart.id << " on table " << chart.table_id << "\n";
    }
    return 0;
}

// ---- session -------------------------------------------------------------------

auto run_session_init(const std::string& table, const std::string& out, std::string id) -> int {
    if (id.empty()) id = new_session_id();
    auto session = Session::create(id, load_csv(table));
    write_file_atomic(out, dump_session(session));
    std::cout << id << "\n";
    return 0;
}

auto run_add_custom(const std::string& path, const std::string& name, const std::string& values) -> int {
    auto session = load_session_file(path);
    std::vector<Value> examples;
    for (const auto& v : split_list(values)) examples.emplace_back(v);
    const auto c = session.create_custom_concept(name, examples);
    write_file_atomic(path, dump_session(session));
    std::cout << concept_to_json(c).dump() << "\n";
    return 0;
}

auto run_add_derived(const std::string& path, const std::string& name, const std::string& sources,
                     const std::string& description, const std::string& formula, const std::string& config,
                     const std::string& backend_name, int pick) -> int {
    auto session = load_session_file(path);
    auto refs = split_list(sources);
    std::string text = formula;
    auto origin = CandidateOrigin::user_edited;
    if (text.empty()) {
        auto backend = make_backend(backend_config(config, backend_name));
        auto candidates = session.preview_derivation(refs, description, name, *backend);
        if (pick < 1 || static_cast<std::size_t>(pick) > candidates.size()) {
            throw Error(ErrorCode::invalid_argument, "--pick is out of range");
        }
        text = candidates[static_cast<std::size_t>(pick) - 1].source_text;
        origin = candidates[static_cast<std::size_t>(pick) - 1].origin;
    }
    auto c = session.commit_derived_concept(name, refs, description, text, origin);
    write_file_atomic(path, dump_session(session));
    std::cout << concept_to_json(c).dump() << "\n";
    return 0;
}

// ---- serve ---------------------------------------------------------------------

Service* g_service = nullptr;

auto run_serve(const std::string& config_path, const std::string& host, int port, const std::string& data_dir) -> int {
    ServiceConfig config;
    if (!config_path.empty()) config = service_config_from_json(load_json_arg(config_path));
    if (!host.empty()) config.host = host;
    if (port >= 0) config.port = port;
    if (!data_dir.empty()) config.data_dir = data_dir;
    fs::create_directories(config.data_dir);
    Service service(config);
    g_service = &service;
    std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
    std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
    std::cerr << "serving on http://" << config.host << ":" << config.port << " (data in " << config.data_dir.string()
              << ")\n";
    service.run();
    g_service = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-driven chart authoring from the command line"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "Find reshaping programs whose output contains the example rows");
    synth_cmd->add_option("--table", synth.table, "Input table (csv)")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--example", synth.example, "Example relation (csv)")->required()->check(CLI::ExistingFile);
    synth_cmd->add_option("--max-depth", synth.max_depth, "Largest program depth")->check(CLI::Range(1, 3));
    synth_cmd->add_flag("--json", synth.as_json, "Print JSON");

    DeriveArgs derive;
    auto* derive_cmd = app.add_subcommand("derive", "Generate a formula and print the extended table as csv");
    derive_cmd->add_option("--table", derive.table, "Input table (csv)")->required()->check(CLI::ExistingFile);
    derive_cmd->add_option("--sources", derive.sources, "Comma-separated source columns")->required();
    derive_cmd->add_option("--desc", derive.description, "What to compute")->required();
    derive_cmd->add_option("--out", derive.out, "Name of the new column")->required();
    derive_cmd->add_option("--backend", derive.backend, "Formula generator")->check(CLI::IsMember({"offline", "remote"}));
    derive_cmd->add_option("--config", derive.config, "JSON file with backend settings");
    derive_cmd->add_option("--pick", derive.pick, "Candidate to apply (1-based)");
    derive_cmd->add_flag("--show-candidates", derive.show_candidates, "List candidates on stderr");

    FormulateArgs formulate;
    auto* formulate_cmd = app.add_subcommand("formulate", "Formulate a chart and write candidate tables and specs");
    formulate_cmd->add_option("--session", formulate.session, "Session file")->required()->check(CLI::ExistingFile);
    formulate_cmd->add_option("--chart", formulate.chart, "Chart request (JSON file or inline JSON)")->required();
    formulate_cmd->add_option("--example", formulate.example, "Example relation (csv)")->check(CLI::ExistingFile);
    formulate_cmd->add_option("--out-dir", formulate.out_dir, "Where candidate files go");
    formulate_cmd->add_option("--save", formulate.save, "Save candidate N into the session file");

    auto* session_cmd = app.add_subcommand("session", "Create and edit session files");
    session_cmd->require_subcommand(1);
    std::string init_table, init_out, init_id;
    auto* init_cmd = session_cmd->add_subcommand("init", "Start a session from a table");
    init_cmd->add_option("--table", init_table, "Input table (csv)")->required()->check(CLI::ExistingFile);
    init_cmd->add_option("--out", init_out, "Session file to write")->required();
    init_cmd->add_option("--id", init_id, "Session id");
    std::string sess_path, concept_name, concept_values;
    auto* custom_cmd = session_cmd->add_subcommand("add-custom", "Add a concept defined by example values");
    custom_cmd->add_option("--session", sess_path, "Session file")->required()->check(CLI::ExistingFile);
    custom_cmd->add_option("--name", concept_name, "Concept name")->required();
    custom_cmd->add_option("--values", concept_values, "Comma-separated example values")->required();
    std::string d_sources, d_desc, d_formula, d_config, d_backend;
    int d_pick = 1;
    auto* derived_cmd = session_cmd->add_subcommand("add-derived", "Add a concept computed from others");
    derived_cmd->add_option("--session", sess_path, "Session file")->required()->check(CLI::ExistingFile);
    derived_cmd->add_option("--name", concept_name, "Concept name")->required();
    derived_cmd->add_option("--sources", d_sources, "Comma-separated source concepts")->required();
    derived_cmd->add_option("--desc", d_desc, "What to compute");
    derived_cmd->add_option("--formula", d_formula, "Formula text; generated from --desc when absent");
    derived_cmd->add_option("--backend", d_backend, "Formula generator")->check(CLI::IsMember({"offline", "remote"}));
    derived_cmd->add_option("--config", d_config, "JSON file with backend settings");
    derived_cmd->add_option("--pick", d_pick, "Generated candidate to commit (1-based)");

    std::string serve_config, serve_host, serve_data;
    int serve_port = -1;
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
    serve_cmd->add_option("--config", serve_config, "Service config (JSON)");
    serve_cmd->add_option("--host", serve_host, "Bind address (default 127.0.0.1)");
    serve_cmd->add_option("--port", serve_port, "Port (default 8765)");
    serve_cmd->add_option("--data-dir", serve_data, "Session directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitError;
    }

    try {
        if (*synth_cmd) return run_synth(synth);
        if (*derive_cmd) return run_derive(derive);
        if (*formulate_cmd) return run_formulate(formulate);
        if (*init_cmd) return run_session_init(init_table, init_out, init_id);
        if (*custom_cmd) return run_add_custom(sess_path, concept_name, concept_values);
        if (*derived_cmd) {
            if (d_formula.empty() && d_desc.empty()) {
                throw Error(ErrorCode::invalid_argument, "give --formula or --desc");
            }
            return run_add_derived(sess_path, concept_name, d_sources, d_desc, d_formula, d_config, d_backend, d_pick);
        }
        if (*serve_cmd) return run_serve(serve_config, serve_host, serve_port, serve_data);
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        if (!e.details().empty() && !e.details().is_null()) std::cerr << e.details().dump(2) << "\n";
        return e.code() == ErrorCode::no_program ? kExitNoProgram : kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
