#pragma once

// Minimal INI-style configuration reader:
//
//   # comment
//   [section]
//   key = value          # values: number, bool, word, or "x,y,z" triple
//
// Keys are addressed as "section.key". Unknown keys are reported back to the
// caller so typos fail loudly.

#include "softarm/geometry.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace softarm {

class ConfigMap {
public:
    ConfigMap() = default;

    static ConfigMap from_string(const std::string& text, const std::string& origin = "<config>") {
        ConfigMap cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    cfg.fail(lineno, "malformed section header '" + trimmed + "'");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                if (section.empty()) cfg.fail(lineno, "empty section name");
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                cfg.fail(lineno, "expected 'key = value', got '" + trimmed + "'");
            std::string key = trim(trimmed.substr(0, eq));
            std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) cfg.fail(lineno, "empty key");
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
                value = value.substr(1, value.size() - 2);
            const std::string full = section.empty() ? key : section + "." + key;
            if (cfg.entries_.count(full)) cfg.fail(lineno, "duplicate key '" + full + "'");
            cfg.entries_[full] = Entry{value, lineno, false};
        }
        return cfg;
    }

    static ConfigMap from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str(), path);
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return it->second.value;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        return parse_double(it->second.value, key, it->second.line);
    }

    int get_int(const std::string& key, int fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        int v = 0;
        const auto& s = it->second.value;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            fail(it->second.line, "key '" + key + "': expected integer, got '" + s + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        const auto& s = it->second.value;
        if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
        if (s == "false" || s == "no" || s == "off" || s == "0") return false;
        fail(it->second.line, "key '" + key + "': expected boolean, got '" + s + "'");
    }

    Vec3 get_vec3(const std::string& key, const Vec3& fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        it->second.used = true;
        std::array<double, 3> v{};
        std::string s = it->second.value;
        for (auto& ch : s)
            if (ch == ',') ch = ' ';
        std::istringstream parts(s);
        for (int i = 0; i < 3; ++i)
            if (!(parts >> v[i]))
                fail(it->second.line, "key '" + key + "': expected 'x,y,z' triple");
        return Vec3(v[0], v[1], v[2]);
    }

    std::vector<std::string> unused_keys() const {
        std::vector<std::string> out;
        for (const auto& [k, e] : entries_)
            if (!e.used) out.push_back(k + " (line " + std::to_string(e.line) + ")");
        return out;
    }

    const std::string& origin() const { return origin_; }

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    double parse_double(const std::string& s, const std::string& key, int line) const {
        double v = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            fail(line, "key '" + key + "': expected number, got '" + s + "'");
        return v;
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw Error(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

    std::string origin_ = "<config>";
    std::map<std::string, Entry> entries_;
};

}  // namespace softarm
