#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

// DIG_CLI_PATH and DIG_SCHEMA_DIR are injected by the build.

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    std::string cmd = std::string(DIG_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* p = ::popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    int status = ::pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// Minimal JSON Schema checker covering the subset the shipped schemas use:
// const, type, required, properties, additionalProperties, items, minItems.
bool validates(const json& value, const json& schema, std::string& why);

bool type_matches(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "integer") return v.is_number_integer() || v.is_number_unsigned();
    if (t == "number") return v.is_number();
    return false;
}

bool validates(const json& value, const json& schema, std::string& why) {
    if (schema.contains("const") && value != schema["const"]) {
        why = "const mismatch: " + value.dump();
        return false;
    }
    if (schema.contains("type") &&
        !type_matches(value, schema["type"].get<std::string>())) {
        why = "type mismatch: expected " + schema["type"].get<std::string>() +
              " got " + value.dump();
        return false;
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& k : schema["required"])
                if (!value.contains(k.get<std::string>())) {
                    why = "missing required key " + k.get<std::string>();
                    return false;
                }
        const json props =
            schema.contains("properties") ? schema["properties"] : json::object();
        for (auto& [k, v] : value.items()) {
            if (props.contains(k)) {
                if (!validates(v, props[k], why)) {
                    why = k + ": " + why;
                    return false;
                }
            } else if (schema.contains("additionalProperties")) {
                const auto& ap = schema["additionalProperties"];
                if (ap.is_boolean() && !ap.get<bool>()) {
                    why = "unexpected key " + k;
                    return false;
                }
                if (ap.is_object() && !validates(v, ap, why)) {
                    why = k + ": " + why;
                    return false;
                }
            }
        }
    }
    if (value.is_array()) {
        if (schema.contains("minItems") &&
            value.size() < schema["minItems"].get<std::size_t>()) {
            why = "too few items";
            return false;
        }
        if (schema.contains("items"))
            for (const auto& item : value)
                if (!validates(item, schema["items"], why)) return false;
    }
    return true;
}

void check_schema(const std::string& name, const std::string& text) {
    std::ifstream in(fs::path(DIG_SCHEMA_DIR) / (name + ".schema.json"));
    REQUIRE(in.good());
    json schema = json::parse(in);
    json value = json::parse(text);
    std::string why;
    bool ok = validates(value, schema, why);
    INFO(name << " report: " << why);
    CHECK(ok);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dig_cli_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), {}};
}

} // namespace

TEST_CASE("help exits 0, usage errors exit 2") {
    CHECK(run("--help").exit_code == 0);
    CHECK(run("psd --help").exit_code == 0);
    CHECK(run("definitely-not-a-subcommand").exit_code == 2);
    CHECK(run("psd --no-such-flag").exit_code == 2);
    CHECK(run("psd").exit_code == 2);   // missing required --scenario
}

TEST_CASE("operational errors exit 1") {
    CHECK(run("psd --scenario no_such_scenario --windows 1 --out /dev/null")
              .exit_code == 1);
    CHECK(run("export --store /nonexistent --topic t --out /dev/null")
              .exit_code == 1);
}

TEST_CASE("psd emits the averaged spectrum CSV and a valid report") {
    TempDir tmp;
    auto csv = tmp.file("psd.csv");
    auto r = run("psd --scenario duty50_100hz --windows 10 --out " + csv +
                 " --json");
    REQUIRE(r.exit_code == 0);
    check_schema("psd", r.out);

    auto body = slurp(csv);
    std::size_t lines = std::count(body.begin(), body.end(), '\n');
    CHECK(lines == 2048 + 1);   // header + one row per bin
    CHECK(body.rfind("frequency_hz,psd_db\n", 0) == 0);
}

TEST_CASE("psd output is deterministic under a fixed seed") {
    TempDir tmp;
    auto a = tmp.file("a.csv"), b = tmp.file("b.csv");
    REQUIRE(run("psd --scenario idle --windows 3 --seed 9 --out " + a)
                .exit_code == 0);
    REQUIRE(run("psd --scenario idle --windows 3 --seed 9 --out " + b)
                .exit_code == 0);
    CHECK(slurp(a) == slurp(b));
    auto c = tmp.file("c.csv");
    REQUIRE(run("psd --scenario idle --windows 3 --seed 10 --out " + c)
                .exit_code == 0);
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("synth and calibrate reports validate") {
    TempDir tmp;
    auto r = run("synth --scenario idle --duration-s 0.05 --out " +
                 tmp.file("t.csv") + " --json");
    REQUIRE(r.exit_code == 0);
    check_schema("synth", r.out);

    r = run("calibrate --sensor shunt --out " + tmp.file("cal.json") +
            " --json");
    REQUIRE(r.exit_code == 0);
    check_schema("calibrate", r.out);
    CHECK(json::parse(r.out)["r2_voltage"].get<double>() > 0.9999);
}

TEST_CASE("train then classify round trip through model files") {
    TempDir tmp;
    auto model = tmp.file("model.json");
    auto r = run("train --scenario idle --scenario cpu_bound --windows 6 --out " +
                 model + " --json");
    REQUIRE(r.exit_code == 0);
    check_schema("train", r.out);

    r = run("classify --model " + model +
            " --scenario cpu_bound --windows 6 --json");
    REQUIRE(r.exit_code == 0);
    check_schema("classify", r.out);
    auto rep = json::parse(r.out);
    CHECK(rep["label"] == "cpu_bound");
    CHECK(rep["agreement"].get<double>() == 1.0);
}

TEST_CASE("offline agent run reports its stream counts") {
    auto r = run("agent --scenario idle --duration-s 1 --json");
    REQUIRE(r.exit_code == 0);
    check_schema("agent", r.out);
    auto rep = json::parse(r.out);
    CHECK(rep["fine_published"] == 1000);
    CHECK(rep["coarse_published"] == 1);
}

TEST_CASE("bench-broker small run delivers everything in order") {
    auto r = run("bench-broker --publishers 4 --period-ms 1 --duration-s 2 "
                 "--json");
    REQUIRE(r.exit_code == 0);
    check_schema("bench-broker", r.out);
    auto rep = json::parse(r.out);
    CHECK(rep["received"] == 8000);
    CHECK(rep["dropped"] == 0);
    CHECK(rep["ordered"] == true);
}

TEST_CASE("replay wires agents through brokers into per-rack stores") {
    TempDir tmp;
    auto store = tmp.file("store");
    auto r = run("replay --racks 2 --agents-per-rack 2 --duration-s 1 --store " +
                 store + " --json");
    REQUIRE(r.exit_code == 0);
    check_schema("replay", r.out);
    auto rep = json::parse(r.out);
    CHECK(rep["fine_published_total"] == 4000);
    CHECK(rep["brokers"].size() == 2);
    for (const auto& b : rep["brokers"]) CHECK(b["dropped"] == 0);
    // each rack's collector persisted its agents' 1 ms streams
    CHECK(rep["stored_total"].get<uint64_t>() >= 4000);
    CHECK(fs::exists(fs::path(store) / "rack0"));
    CHECK(fs::exists(fs::path(store) / "rack1"));

    auto exp = run("export --store " + store +
                   "/rack0 --topic org/rack0/node0/pwr/avg1ms --out " +
                   tmp.file("f.csv") + " --json");
    REQUIRE(exp.exit_code == 0);
    check_schema("export", exp.out);
    CHECK(json::parse(exp.out)["rows"] == 1000);
}
