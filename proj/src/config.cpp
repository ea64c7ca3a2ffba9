// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "spot/config.hpp"

#include "spot/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace spot {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
    throw DataError("config key '" + key + "': " + why + " (got '" + value + "')");
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) bad(key, v, "expected an integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end) bad(key, v, "expected an unsigned integer");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(out)) bad(key, v, "expected a finite number");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad(key, v, "expected true or false");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

} // namespace

void RunConfig::validate() const {
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    if (epochs < 1) throw DataError("config key 'epochs': must be at least 1");
    if (batch_size < 1) throw DataError("config key 'batch_size': must be at least 1");
    if (!(lr > 0.0)) throw DataError("config key 'lr': must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw DataError("config key 'lr_decay': must be in (0, 1]");
    if (lr_decay_every < 1) throw DataError("config key 'lr_decay_every': must be at least 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw DataError("config key 'val_fraction': must be in [0, 1)");
    for (double w : {loss.coarse1, loss.coarse2, loss.coarse3, loss.fine}) {
        if (!(w >= 0.0)) throw DataError("config: loss weights must be non-negative");
    }
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;
    cfg.preset = name;
    if (name == "desk") {
        cfg.model = ModelConfig::desk();
    } else if (name == "paper") {
        cfg.model = ModelConfig::paper();
        cfg.batch_size = 32;
        cfg.epochs = 400;
    } else if (name == "micro") {
        cfg.model = ModelConfig::micro();
        cfg.epochs = 2;
        cfg.batch_size = 2;
    } else {
        throw DataError("config key 'preset': unknown preset '" + name + "'");
    }
    return cfg;
}

void set_config_key(RunConfig& c, const std::string& key, const std::string& v) {
    auto& m = c.model;
    auto index_of = [&](const std::string& s) {
        const long long x = to_int(key, s);
        return static_cast<Index>(x);
    };
    if (key == "preset") {
        c = preset_config(v);
    } else if (key == "input_n") {
        m.input_n = index_of(v);
    } else if (key == "level_n") {
        const auto items = split_list(v);
        if (items.size() != 3) bad(key, v, "expected three comma-separated counts");
        for (int i = 0; i < 3; ++i) m.level_n[i] = index_of(items[i]);
    } else if (key == "out_n") {
        m.out_n = index_of(v);
    } else if (key == "base_c") {
        m.base_c = index_of(v);
    } else if (key == "neighbor_s") {
        m.neighbor_s = index_of(v);
    } else if (key == "radii") {
        const auto items = split_list(v);
        if (items.size() != 2) bad(key, v, "expected two comma-separated radii");
        for (int i = 0; i < 2; ++i) m.radii[i] = to_double(key, items[i]);
    } else if (key == "pdma_scales") {
        m.pdma_scales.clear();
        for (const auto& s : split_list(v)) m.pdma_scales.push_back(index_of(s));
        if (m.pdma_scales.empty()) bad(key, v, "expected at least one scale");
    } else if (key == "pla_heads") {
        m.pla_heads = index_of(v);
    } else if (key == "pdma_heads") {
        m.pdma_heads = index_of(v);
    } else if (key == "use_pla") {
        m.use_pla = to_bool(key, v);
    } else if (key == "use_pdma") {
        m.use_pdma = to_bool(key, v);
    } else if (key == "pdma_dense") {
        m.pdma_dense = to_bool(key, v);
    } else if (key == "pdma_vanilla") {
        m.pdma_vanilla = to_bool(key, v);
    } else if (key == "use_dra") {
        m.use_dra = to_bool(key, v);
    } else if (key == "cd_squared") {
        m.cd_squared = to_bool(key, v);
    } else if (key == "canonical_input") {
        m.canonical_input = to_bool(key, v);
    } else if (key == "init_seed") {
        m.init_seed = to_u64(key, v);
    } else if (key == "alpha_1") {
        c.loss.coarse1 = to_double(key, v);
    } else if (key == "alpha_2") {
        c.loss.coarse2 = to_double(key, v);
    } else if (key == "alpha_3") {
        c.loss.coarse3 = to_double(key, v);
    } else if (key == "alpha_fine") {
        c.loss.fine = to_double(key, v);
    } else if (key == "staged_fine") {
        c.staged_fine = to_bool(key, v);
    } else if (key == "epochs") {
        c.epochs = static_cast<int>(to_int(key, v));
    } else if (key == "batch_size") {
        c.batch_size = static_cast<int>(to_int(key, v));
    } else if (key == "lr") {
        c.lr = to_double(key, v);
    } else if (key == "lr_decay") {
        c.lr_decay = to_double(key, v);
    } else if (key == "lr_decay_every") {
        c.lr_decay_every = static_cast<int>(to_int(key, v));
    } else if (key == "seed") {
        c.seed = to_u64(key, v);
    } else if (key == "val_fraction") {
        c.val_fraction = to_double(key, v);
    } else if (key == "dataset") {
        c.dataset = v;
    } else if (key == "checkpoint") {
        c.checkpoint = v;
    } else if (key == "log") {
        c.log = v;
    } else {
        throw DataError("unknown config key '" + key + "'");
    }
}

RunConfig parse_run_config(const std::string& text) {
    struct Entry {
        std::string value;
        int line;
    };
    std::vector<std::pair<std::string, Entry>> entries;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto hash = line.find(" #");
        if (hash != std::string::npos) line = trim(line.substr(0, hash));
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("config: empty key", lineno);
        if (auto it = seen.find(key); it != seen.end()) {
            throw ParseError("config key '" + key + "': duplicate (first set on line " + std::to_string(it->second) + ")",
                             lineno);
        }
        seen[key] = lineno;
        entries.push_back({key, {value, lineno}});
    }
    RunConfig cfg;
    for (const auto& [key, e] : entries) {
        if (key != "preset") continue;
        try {
            cfg = preset_config(e.value);
        } catch (const DataError& err) {
            throw ParseError(err.what(), e.line);
        }
    }
    for (const auto& [key, e] : entries) {
        if (key == "preset") continue;
        try {
            set_config_key(cfg, key, e.value);
        } catch (const DataError& err) {
            throw ParseError(err.what(), e.line);
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& c) {
    const auto& m = c.model;
    std::ostringstream os;
    os << "preset = " << c.preset << '\n';
    os << "input_n = " << m.input_n << '\n';
    os << "level_n = " << m.level_n[0] << ',' << m.level_n[1] << ',' << m.level_n[2] << '\n';
    os << "out_n = " << m.out_n << '\n';
    os << "base_c = " << m.base_c << '\n';
    os << "neighbor_s = " << m.neighbor_s << '\n';
    os << "radii = " << fmt(m.radii[0]) << ',' << fmt(m.radii[1]) << '\n';
    os << "pdma_scales = ";
    for (std::size_t i = 0; i < m.pdma_scales.size(); ++i) os << (i ? "," : "") << m.pdma_scales[i];
    os << '\n';
    os << "pla_heads = " << m.pla_heads << '\n';
    os << "pdma_heads = " << m.pdma_heads << '\n';
    os << "use_pla = " << fmt(m.use_pla) << '\n';
    os << "use_pdma = " << fmt(m.use_pdma) << '\n';
    os << "pdma_dense = " << fmt(m.pdma_dense) << '\n';
    os << "pdma_vanilla = " << fmt(m.pdma_vanilla) << '\n';
    os << "use_dra = " << fmt(m.use_dra) << '\n';
    os << "cd_squared = " << fmt(m.cd_squared) << '\n';
    os << "canonical_input = " << fmt(m.canonical_input) << '\n';
    os << "init_seed = " << m.init_seed << '\n';
    os << "alpha_1 = " << fmt(c.loss.coarse1) << '\n';
    os << "alpha_2 = " << fmt(c.loss.coarse2) << '\n';
    os << "alpha_3 = " << fmt(c.loss.coarse3) << '\n';
    os << "alpha_fine = " << fmt(c.loss.fine) << '\n';
    os << "staged_fine = " << fmt(c.staged_fine) << '\n';
    os << "epochs = " << c.epochs << '\n';
    os << "batch_size = " << c.batch_size << '\n';
    os << "lr = " << fmt(c.lr) << '\n';
    os << "lr_decay = " << fmt(c.lr_decay) << '\n';
    os << "lr_decay_every = " << c.lr_decay_every << '\n';
    os << "seed = " << c.seed << '\n';
    os << "val_fraction = " << fmt(c.val_fraction) << '\n';
    os << "dataset = " << c.dataset << '\n';
    os << "checkpoint = " << c.checkpoint << '\n';
    os << "log = " << c.log << '\n';
    return os.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_run_config(a) == serialize_run_config(b); }

} // namespace spot
