#pragma once
// Line-level scanning of Python source: top-level definitions, docstrings
// and import statements. No full parser; good enough for generated code and
// the usual hand-written module layouts.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace codemap {

struct PyDefinition {
    std::string kind;       // "def" or "class"
    std::string name;
    std::string header;     // "def f(a, b)" with continuation lines joined, no trailing colon
    std::string docstring;  // cleaned docstring body, "" when absent
    std::size_t line = 0;   // 1-based line of the def/class keyword
    std::string text;       // decorators, header and docstring exactly as written
};

std::vector<PyDefinition> top_level_definitions(std::string_view source);

// Cleaned module docstring, "" when the module has none.
std::string module_docstring(std::string_view source);

struct PyImport {
    std::size_t line = 0;
    int level = 0;                   // leading dots of a relative import
    std::string module;              // dotted name, may be empty for "from . import x"
    std::vector<std::string> names;  // imported names for "from" imports, empty otherwise
};

// Import statements outside comments and triple-quoted strings. Each module of
// "import a, b" becomes its own entry.
std::vector<PyImport> scan_imports(std::string_view source);

std::vector<std::string_view> split_lines(std::string_view text);

// inspect.cleandoc: strip the first line, dedent the rest, drop blank edges.
std::string clean_docstring(std::string_view raw);

}  // namespace codemap
