#include "amp/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace amp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return s.substr(b, e - b);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"')
            quoted = !quoted;
        else if (s[i] == '#' && !quoted)
            return s.substr(0, i);
    }
    return s;
}

} // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw BadSpec("config: malformed section header at line " +
                              std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw BadSpec("config: expected key = value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw BadSpec("config: empty key or value at line " + std::to_string(lineno));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        cfg.set(section, key, value);
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream file(path);
    if (!file)
        throw IOFailure("config: cannot open " + path);
    std::stringstream buf;
    buf << file.rdbuf();
    return parse(buf.str());
}

const std::string* ConfigFile::find(const std::string& section, const std::string& key) const {
    for (const Section& s : sections_)
        if (s.first == section)
            for (const auto& kv : s.second)
                if (kv.first == key)
                    return &kv.second;
    return nullptr;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    const std::string* v = find(section, key);
    if (!v)
        return fallback;
    try {
        std::size_t used = 0;
        const double parsed = std::stod(*v, &used);
        if (used != v->size())
            throw std::invalid_argument(*v);
        return parsed;
    } catch (const std::exception&) {
        throw BadSpec("config: bad float for " + section + "." + key + ": " + *v);
    }
}

std::int64_t ConfigFile::get_int(const std::string& section, const std::string& key,
                                 std::int64_t fallback) const {
    const std::string* v = find(section, key);
    if (!v)
        return fallback;
    try {
        std::size_t used = 0;
        const std::int64_t parsed = std::stoll(*v, &used);
        if (used != v->size())
            throw std::invalid_argument(*v);
        return parsed;
    } catch (const std::exception&) {
        throw BadSpec("config: bad integer for " + section + "." + key + ": " + *v);
    }
}

std::uint64_t ConfigFile::get_uint(const std::string& section, const std::string& key,
                                   std::uint64_t fallback) const {
    const std::string* v = find(section, key);
    if (!v)
        return fallback;
    try {
        std::size_t used = 0;
        const std::uint64_t parsed = std::stoull(*v, &used);
        if (used != v->size())
            throw std::invalid_argument(*v);
        return parsed;
    } catch (const std::exception&) {
        throw BadSpec("config: bad unsigned integer for " + section + "." + key + ": " + *v);
    }
}

void ConfigFile::set(const std::string& section, const std::string& key,
                     const std::string& value) {
    for (Section& s : sections_) {
        if (s.first == section) {
            for (auto& kv : s.second) {
                if (kv.first == key) {
                    kv.second = value;
                    return;
                }
            }
            s.second.emplace_back(key, value);
            return;
        }
    }
    sections_.push_back({section, {{key, value}}});
}

void ConfigFile::set_double(const std::string& section, const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    set(section, key, buf);
}

void ConfigFile::set_int(const std::string& section, const std::string& key,
                         std::int64_t value) {
    set(section, key, std::to_string(value));
}

void ConfigFile::set_uint(const std::string& section, const std::string& key,
                          std::uint64_t value) {
    set(section, key, std::to_string(value));
}

std::string ConfigFile::dump() const {
    std::string out;
    for (const Section& s : sections_) {
        if (!out.empty())
            out += "\n";
        out += "[" + s.first + "]\n";
        for (const auto& kv : s.second)
            out += kv.first + " = " + kv.second + "\n";
    }
    return out;
}

void CliConfig::apply(const ConfigFile& file) {
    data.classes = static_cast<int>(file.get_int("data", "classes", data.classes));
    data.channels = static_cast<int>(file.get_int("data", "channels", data.channels));
    data.height = static_cast<int>(file.get_int("data", "height", data.height));
    data.width = static_cast<int>(file.get_int("data", "width", data.width));
    data.parts = static_cast<int>(file.get_int("data", "parts", data.parts));
    data.part_scale = file.get_double("data", "part_scale", data.part_scale);
    data.noise = file.get_double("data", "noise", data.noise);
    data.samples_per_class =
        static_cast<int>(file.get_int("data", "samples_per_class", data.samples_per_class));
    data.seed = file.get_uint("data", "seed", data.seed);

    depth = static_cast<int>(file.get_int("model", "depth", depth));
    train.k = static_cast<int>(file.get_int("model", "k", train.k));

    train.epochs = static_cast<int>(file.get_int("train", "epochs", train.epochs));
    train.batch_size = static_cast<int>(file.get_int("train", "batch_size", train.batch_size));
    train.lr_max = file.get_double("train", "lr_max", train.lr_max);
    train.lr_min = file.get_double("train", "lr_min", train.lr_min);
    train.checkpoint_every =
        static_cast<int>(file.get_int("train", "checkpoint_every", train.checkpoint_every));
    train.seed = file.get_uint("train", "seed", train.seed);

    train.weights.gamma1 = file.get_double("loss", "gamma1", train.weights.gamma1);
    train.weights.gamma2 = file.get_double("loss", "gamma2", train.weights.gamma2);
    train.weights.lambda = file.get_double("loss", "lambda", train.weights.lambda);
}

ConfigFile CliConfig::to_file() const {
    ConfigFile f;
    f.set_int("data", "classes", data.classes);
    f.set_int("data", "channels", data.channels);
    f.set_int("data", "height", data.height);
    f.set_int("data", "width", data.width);
    f.set_int("data", "parts", data.parts);
    f.set_double("data", "part_scale", data.part_scale);
    f.set_double("data", "noise", data.noise);
    f.set_int("data", "samples_per_class", data.samples_per_class);
    f.set_uint("data", "seed", data.seed);
    f.set_int("model", "depth", depth);
    f.set_int("model", "k", train.k);
    f.set_int("train", "epochs", train.epochs);
    f.set_int("train", "batch_size", train.batch_size);
    f.set_double("train", "lr_max", train.lr_max);
    f.set_double("train", "lr_min", train.lr_min);
    f.set_int("train", "checkpoint_every", train.checkpoint_every);
    f.set_uint("train", "seed", train.seed);
    f.set_double("loss", "gamma1", train.weights.gamma1);
    f.set_double("loss", "gamma2", train.weights.gamma2);
    f.set_double("loss", "lambda", train.weights.lambda);
    return f;
}

} // namespace amp
