#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopid/errors.hpp"
#include "koopid/linalg.hpp"

namespace koopid {

// One recorded run of a system: aligned sequences of inputs and measured
// outputs, optionally the full state when it was observable. All sequences
// that are present share one length.
struct Trajectory {
    std::vector<Vec> states;   // empty when states were not recorded
    std::vector<Vec> inputs;   // empty for autonomous systems
    std::vector<Vec> outputs;
    double dt = 0.0;

    std::size_t length() const { return outputs.size(); }
    std::size_t n_u() const { return inputs.empty() ? 0 : inputs.front().size(); }
    std::size_t n_y() const { return outputs.empty() ? 0 : outputs.front().size(); }
};

// The state series an encoder should read: recorded states when present,
// otherwise the outputs (valid whenever the output map is the identity).
inline const std::vector<Vec>& state_series(const Trajectory& t) {
    return t.states.empty() ? t.outputs : t.states;
}

enum class Role { Train, Validation, Test };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::Validation: return "validation";
        case Role::Test: return "test";
    }
    return "?";
}

struct Dataset {
    std::vector<Trajectory> trajectories;
    Role role = Role::Train;

    std::size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
};

struct DatasetBundle {
    Dataset train{{}, Role::Train};
    Dataset validation{{}, Role::Validation};
    Dataset test{{}, Role::Test};
    Dataset arrowhead{{}, Role::Test};  // optional extra test record; may be empty
};

// --- CSV ------------------------------------------------------------------

// %.17g is enough digits to reproduce any finite double exactly on reload.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void save_trajectory_csv(const Trajectory& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
    const std::size_t nu = t.n_u(), ny = t.n_y();
    for (std::size_t j = 0; j < nu; ++j) out << "u" << j + 1 << ",";
    for (std::size_t j = 0; j < ny; ++j) out << "y" << j + 1 << (j + 1 < ny ? "," : "");
    out << '\n';
    for (std::size_t k = 0; k < t.length(); ++k) {
        for (std::size_t j = 0; j < nu; ++j) out << format_double(t.inputs[k][j]) << ",";
        for (std::size_t j = 0; j < ny; ++j)
            out << format_double(t.outputs[k][j]) << (j + 1 < ny ? "," : "");
        out << '\n';
    }
    if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<Vec> rows;

    std::size_t column(const std::string& name, const std::string& path) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        fail(ErrorCode::Parse, path + ": missing column '" + name + "'");
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open CSV file '" + path + "'");
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (lineno == 1) {
            table.header = split_csv_line(line);
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != table.header.size())
            fail(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": expected " +
                                       std::to_string(table.header.size()) + " fields, got " +
                                       std::to_string(fields.size()));
        Vec row;
        row.reserve(fields.size());
        for (const std::string& f : fields) {
            try {
                std::size_t used = 0;
                const double v = std::stod(f, &used);
                if (used != f.size()) throw std::invalid_argument(f);
                row.push_back(v);
            } catch (const std::exception&) {
                fail(ErrorCode::Parse,
                     path + ":" + std::to_string(lineno) + ": bad number '" + f + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) fail(ErrorCode::Parse, path + ": empty file");
    return table;
}

// Column names and sample period for ingesting an externally recorded CSV.
// Optional segments carve one long record into role-tagged pieces.
struct CsvSegment {
    std::string role;   // train | validation | test | arrowhead
    std::size_t begin;  // first sample index
    std::size_t end;    // one past the last sample index
};

struct CsvSchema {
    std::vector<std::string> u_columns;
    std::vector<std::string> y_columns;
    double dt = 0.0;
    std::vector<CsvSegment> segments;
};

inline CsvSchema schema_from_json(const nlohmann::json& j) try {
    CsvSchema s;
    for (const auto& [key, value] : j.items()) {
        if (key == "u") s.u_columns = value.get<std::vector<std::string>>();
        else if (key == "y") s.y_columns = value.get<std::vector<std::string>>();
        else if (key == "dt") s.dt = value.get<double>();
        else if (key == "segments") {
            for (const auto& seg : value) {
                CsvSegment cs;
                cs.role = seg.at("role").get<std::string>();
                cs.begin = seg.at("begin").get<std::size_t>();
                cs.end = seg.at("end").get<std::size_t>();
                s.segments.push_back(cs);
            }
        } else {
            fail(ErrorCode::Config, "schema: unknown key '" + key + "'");
        }
    }
    if (s.y_columns.empty()) fail(ErrorCode::Config, "schema: no output columns named");
    if (s.dt <= 0.0) fail(ErrorCode::Config, "schema: dt must be positive");
    return s;
} catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("schema: ") + e.what());
}

inline CsvSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open schema file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, "schema '" + path + "': " + e.what());
    }
    return schema_from_json(j);
}

inline Trajectory table_slice(const CsvTable& table, const CsvSchema& schema,
                              const std::string& path, std::size_t begin, std::size_t end) {
    if (end > table.rows.size() || begin >= end)
        fail(ErrorCode::Config, path + ": segment [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") out of range (file has " +
                                    std::to_string(table.rows.size()) + " samples)");
    std::vector<std::size_t> ucols, ycols;
    for (const auto& name : schema.u_columns) ucols.push_back(table.column(name, path));
    for (const auto& name : schema.y_columns) ycols.push_back(table.column(name, path));
    Trajectory t;
    t.dt = schema.dt;
    for (std::size_t k = begin; k < end; ++k) {
        if (!ucols.empty()) {
            Vec u(ucols.size());
            for (std::size_t j = 0; j < ucols.size(); ++j) u[j] = table.rows[k][ucols[j]];
            t.inputs.push_back(std::move(u));
        }
        Vec y(ycols.size());
        for (std::size_t j = 0; j < ycols.size(); ++j) y[j] = table.rows[k][ycols[j]];
        t.outputs.push_back(std::move(y));
    }
    return t;
}

// Whole file as a single trajectory.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    const CsvTable table = read_csv(path);
    Dataset ds;
    ds.role = Role::Test;
    ds.trajectories.push_back(table_slice(table, schema, path, 0, table.rows.size()));
    return ds;
}

// One long record split into role-tagged datasets by the schema's segments.
inline DatasetBundle split_csv(const std::string& path, const CsvSchema& schema) {
    if (schema.segments.empty())
        fail(ErrorCode::Config, "schema has no segments to split '" + path + "' with");
    const CsvTable table = read_csv(path);
    DatasetBundle bundle;
    for (const CsvSegment& seg : schema.segments) {
        Trajectory t = table_slice(table, schema, path, seg.begin, seg.end);
        if (seg.role == "train") bundle.train.trajectories.push_back(std::move(t));
        else if (seg.role == "validation") bundle.validation.trajectories.push_back(std::move(t));
        else if (seg.role == "test") bundle.test.trajectories.push_back(std::move(t));
        else if (seg.role == "arrowhead") bundle.arrowhead.trajectories.push_back(std::move(t));
        else fail(ErrorCode::Config, "schema: unknown segment role '" + seg.role + "'");
    }
    return bundle;
}

// --- dataset directory (our own on-disk format) -----------------------------

// A generated dataset lives in a directory: one CSV per trajectory plus a
// manifest recording the generator, its parameters, the seed and the
// role split, so every data file is traceable to the command that made it.
inline void save_dataset_dir(const DatasetBundle& bundle, const std::string& dir,
                             const std::string& generator, const nlohmann::json& params,
                             std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir + "': " + ec.message());

    nlohmann::json manifest;
    manifest["format"] = "koopid-dataset";
    manifest["generator"] = generator;
    manifest["params"] = params;
    manifest["seed"] = seed;

    double dt = 0.0;
    std::size_t nu = 0, ny = 0;
    nlohmann::json roles;
    auto dump = [&](const Dataset& ds, const std::string& tag) {
        nlohmann::json files = nlohmann::json::array();
        for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%03zu.csv", tag.c_str(), i);
            save_trajectory_csv(ds.trajectories[i], (fs::path(dir) / name).string());
            files.push_back(name);
            dt = ds.trajectories[i].dt;
            nu = ds.trajectories[i].n_u();
            ny = ds.trajectories[i].n_y();
        }
        roles[tag] = std::move(files);
    };
    dump(bundle.train, "train");
    dump(bundle.validation, "validation");
    dump(bundle.test, "test");
    if (!bundle.arrowhead.empty()) dump(bundle.arrowhead, "arrowhead");

    manifest["roles"] = std::move(roles);
    manifest["dt"] = dt;
    manifest["n_u"] = nu;
    manifest["n_y"] = ny;

    std::ofstream out((fs::path(dir) / "manifest.json").string());
    if (!out) fail(ErrorCode::Io, "cannot write manifest in '" + dir + "'");
    out << manifest.dump(2) << '\n';
}

inline DatasetBundle load_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(manifest_path);
    if (!in) fail(ErrorCode::Io, "cannot open dataset manifest '" + manifest_path + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, manifest_path + ": " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "koopid-dataset")
        fail(ErrorCode::Parse, manifest_path + ": not a dataset manifest");
    double dt = 0.0;
    try {
        dt = manifest.at("dt").get<double>();
        if (!manifest.contains("roles")) fail(ErrorCode::Parse, manifest_path + ": no roles");
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, manifest_path + ": " + std::string(e.what()));
    }

    DatasetBundle bundle;
    auto load_role = [&](const std::string& tag, Dataset& out_ds) {
        if (!manifest.at("roles").contains(tag)) return;
        for (const auto& f : manifest.at("roles").at(tag)) {
            if (!f.is_string()) fail(ErrorCode::Parse, manifest_path + ": bad file entry");
            const std::string path = (fs::path(dir) / f.get<std::string>()).string();
            const CsvTable table = read_csv(path);
            CsvSchema schema;
            schema.dt = dt;
            for (const std::string& h : table.header) {
                if (h.rfind("u", 0) == 0) schema.u_columns.push_back(h);
                else if (h.rfind("y", 0) == 0) schema.y_columns.push_back(h);
                else fail(ErrorCode::Parse, path + ": unexpected column '" + h + "'");
            }
            out_ds.trajectories.push_back(
                table_slice(table, schema, path, 0, table.rows.size()));
        }
    };
    load_role("train", bundle.train);
    load_role("validation", bundle.validation);
    load_role("test", bundle.test);
    load_role("arrowhead", bundle.arrowhead);
    return bundle;
}

}  // namespace koopid
