#include "codemap/pysource.hpp"

#include <algorithm>
#include <cctype>
#include <limits>

namespace codemap {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string_view ltrim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

// Tracks whether we are inside a triple-quoted string across lines.
class StringState {
public:
    bool in_triple() const { return !delim_.empty(); }

    // Consumes one line. Returns the code part of the line with comments and
    // string contents blanked out, so callers can look for ':' and brackets.
    std::string consume(std::string_view line) {
        std::string code;
        std::size_t i = 0;
        while (i < line.size()) {
            if (!delim_.empty()) {
                if (line.substr(i, 3) == delim_) {
                    delim_.clear();
                    i += 3;
                    code += "\"\"";
                } else {
                    ++i;
                }
                continue;
            }
            const char c = line[i];
            if (c == '#') break;
            if (line.substr(i, 3) == "\"\"\"" || line.substr(i, 3) == "'''") {
                delim_ = std::string(line.substr(i, 3));
                i += 3;
                continue;
            }
            if (c == '"' || c == '\'') {
                std::size_t j = i + 1;
                while (j < line.size() && line[j] != c) {
                    j += line[j] == '\\' ? 2 : 1;
                }
                code += "\"\"";
                i = std::min(j + 1, line.size());
                continue;
            }
            code += c;
            ++i;
        }
        return code;
    }

private:
    std::string delim_;
};

bool starts_with_word(std::string_view s, std::string_view word) {
    return s.starts_with(word) && (s.size() == word.size() || s[word.size()] == ' ' || s[word.size()] == '\t' ||
                                   s[word.size()] == '(' || s[word.size()] == '.');
}

std::string identifier_at(std::string_view s) {
    std::size_t n = 0;
    while (n < s.size() && (std::isalnum(static_cast<unsigned char>(s[n])) || s[n] == '_')) ++n;
    return std::string(s.substr(0, n));
}

int bracket_delta(std::string_view code) {
    int d = 0;
    for (char c : code) {
        if (c == '(' || c == '[' || c == '{') ++d;
        if (c == ')' || c == ']' || c == '}') --d;
    }
    return d;
}

std::size_t indent_of(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
    return n;
}

// Docstring opener: optional r/u prefix then a triple quote. Returns the
// delimiter and the offset just past it, or an empty delimiter.
std::pair<std::string, std::size_t> docstring_open(std::string_view stripped) {
    std::size_t p = 0;
    while (p < stripped.size() && p < 2 && std::string_view("rRuU").find(stripped[p]) != std::string_view::npos) ++p;
    auto rest = stripped.substr(p);
    if (rest.starts_with("\"\"\"")) return {"\"\"\"", p + 3};
    if (rest.starts_with("'''")) return {"'''", p + 3};
    return {"", 0};
}

struct DocBlock {
    std::string raw;         // text between the delimiters
    std::size_t last_line = 0;  // index of the closing line
    bool found = false;
};

DocBlock read_docstring(const std::vector<std::string_view>& lines, std::size_t start) {
    DocBlock block;
    std::size_t i = start;
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i >= lines.size()) return block;
    const auto stripped = ltrim(lines[i]);
    auto [delim, offset] = docstring_open(stripped);
    if (delim.empty()) return block;
    std::string_view rest = stripped.substr(offset);
    std::string raw;
    for (;;) {
        const auto close = rest.find(delim);
        if (close != std::string_view::npos) {
            raw.append(rest.substr(0, close));
            block.raw = std::move(raw);
            block.last_line = i;
            block.found = true;
            return block;
        }
        raw.append(rest);
        raw.push_back('\n');
        if (++i >= lines.size()) return DocBlock{};
        rest = lines[i];
    }
}

void split_names(std::string_view list, std::vector<std::string>& out) {
    std::size_t pos = 0;
    while (pos <= list.size()) {
        auto comma = list.find(',', pos);
        if (comma == std::string_view::npos) comma = list.size();
        auto item = trim(list.substr(pos, comma - pos));
        if (auto as = item.find(" as "); as != std::string_view::npos) item = trim(item.substr(0, as));
        if (!item.empty()) out.emplace_back(item);
        pos = comma + 1;
    }
}

}  // namespace

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = nl + 1;
    }
    return lines;
}

std::string clean_docstring(std::string_view raw) {
    auto lines = split_lines(raw);
    if (lines.empty()) return "";
    std::size_t margin = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (!trim(lines[i]).empty()) margin = std::min(margin, indent_of(lines[i]));
    }
    std::vector<std::string> out;
    out.emplace_back(trim(lines[0]));
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto line = lines[i];
        if (margin != std::numeric_limits<std::size_t>::max() && line.size() >= margin) {
            line = line.substr(margin);
        } else {
            line = trim(line);
        }
        std::string s(line);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        out.push_back(std::move(s));
    }
    while (!out.empty() && out.front().empty()) out.erase(out.begin());
    while (!out.empty() && out.back().empty()) out.pop_back();
    std::string joined;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (i > 0) joined.push_back('\n');
        joined += out[i];
    }
    return joined;
}

std::string module_docstring(std::string_view source) {
    auto lines = split_lines(source);
    std::size_t i = 0;
    while (i < lines.size()) {
        auto t = trim(lines[i]);
        if (t.empty() || t.starts_with("#")) {
            ++i;
            continue;
        }
        break;
    }
    auto block = read_docstring(lines, i);
    return block.found ? clean_docstring(block.raw) : "";
}

std::vector<PyDefinition> top_level_definitions(std::string_view source) {
    const auto lines = split_lines(source);
    std::vector<PyDefinition> defs;
    StringState state;
    std::size_t i = 0;
    while (i < lines.size()) {
        const bool in_code = !state.in_triple();
        const auto line = lines[i];
        if (!in_code || line.empty() || line[0] == ' ' || line[0] == '\t') {
            state.consume(line);
            ++i;
            continue;
        }
        std::string_view head = line;
        if (starts_with_word(head, "async")) head = ltrim(head.substr(5));
        const bool is_def = starts_with_word(head, "def");
        const bool is_class = starts_with_word(head, "class");
        if (!is_def && !is_class) {
            state.consume(line);
            ++i;
            continue;
        }
        PyDefinition def;
        def.kind = is_def ? "def" : "class";
        def.name = identifier_at(ltrim(head.substr(is_def ? 3 : 5)));
        def.line = i + 1;

        // Decorators directly above the definition.
        std::size_t first = i;
        while (first > 0 && lines[first - 1].starts_with("@")) --first;

        // Header may span lines while brackets are open.
        std::string header;
        int depth = 0;
        std::size_t j = i;
        for (; j < lines.size(); ++j) {
            const std::string code = state.consume(lines[j]);
            depth += bracket_delta(code);
            auto piece = trim(lines[j]);
            if (!header.empty() && !header.ends_with("(") && !piece.starts_with(")")) header.push_back(' ');
            header.append(piece);
            if (depth <= 0 && trim(code).ends_with(":")) break;
        }
        if (j >= lines.size()) j = lines.size() - 1;
        if (auto colon = header.rfind(':'); colon != std::string::npos) header.erase(colon);
        while (!header.empty() && std::isspace(static_cast<unsigned char>(header.back()))) header.pop_back();
        def.header = header;

        std::size_t last = j;
        auto block = read_docstring(lines, j + 1);
        if (block.found && indent_of(lines[std::min(block.last_line, lines.size() - 1)]) > 0) {
            def.docstring = clean_docstring(block.raw);
            for (std::size_t k = j + 1; k <= block.last_line; ++k) state.consume(lines[k]);
            last = block.last_line;
        }
        for (std::size_t k = first; k <= last; ++k) {
            def.text.append(lines[k]);
            def.text.push_back('\n');
        }
        defs.push_back(std::move(def));
        i = last + 1;
    }
    return defs;
}

std::vector<PyImport> scan_imports(std::string_view source) {
    const auto lines = split_lines(source);
    std::vector<PyImport> out;
    StringState state;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const bool in_code = !state.in_triple();
        std::string code = state.consume(lines[i]);
        if (!in_code) continue;
        std::string_view stmt = trim(code);
        if (starts_with_word(stmt, "import")) {
            std::vector<std::string> modules;
            split_names(stmt.substr(6), modules);
            for (auto& m : modules) out.push_back({i + 1, 0, std::move(m), {}});
        } else if (starts_with_word(stmt, "from")) {
            auto rest = ltrim(stmt.substr(4));
            const auto kw = rest.find(" import");
            if (kw == std::string_view::npos) continue;
            auto target = trim(rest.substr(0, kw));
            std::string names_text(trim(rest.substr(kw + 7)));
            PyImport imp;
            imp.line = i + 1;
            while (!target.empty() && target.front() == '.') {
                ++imp.level;
                target.remove_prefix(1);
            }
            imp.module = std::string(target);
            if (names_text.starts_with("(")) {
                while (names_text.find(')') == std::string::npos && i + 1 < lines.size()) {
                    names_text += " " + state.consume(lines[++i]);
                }
                names_text.erase(std::remove(names_text.begin(), names_text.end(), '('), names_text.end());
                names_text.erase(std::remove(names_text.begin(), names_text.end(), ')'), names_text.end());
            } else {
                while (names_text.ends_with("\\") && i + 1 < lines.size()) {
                    names_text.pop_back();
                    names_text += " " + state.consume(lines[++i]);
                }
            }
            split_names(names_text, imp.names);
            out.push_back(std::move(imp));
        }
    }
    return out;
}

}  // namespace codemap
