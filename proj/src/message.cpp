#include "esci/message.hpp"

#include "esci/errors.hpp"

#include <charconv>
#include <sstream>

namespace esci {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void write_field(std::string& out, std::string_view name, const Matrix& m)
{
    out += name;
    out += ' ';
    out += std::to_string(m.rows());
    out += ' ';
    out += std::to_string(m.cols());
    char buf[64];
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            // Shortest representation that round-trips exactly.
            const auto res = std::to_chars(buf, buf + sizeof(buf), m(r, c));
            out += ' ';
            out.append(buf, res.ptr);
        }
    }
    out += '\n';
}

struct RawField {
    std::string name;
    Matrix value;
};

std::vector<std::string_view> split_words(std::string_view line)
{
    std::vector<std::string_view> words;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && line[pos] == ' ') {
            ++pos;
        }
        const std::size_t start = pos;
        while (pos < line.size() && line[pos] != ' ') {
            ++pos;
        }
        if (pos > start) {
            words.push_back(line.substr(start, pos - start));
        }
    }
    return words;
}

template <class T>
T parse_number(std::string_view word, std::string_view what)
{
    T value{};
    const auto res = std::from_chars(word.data(), word.data() + word.size(), value);
    if (res.ec != std::errc() || res.ptr != word.data() + word.size()) {
        throw FormatError("message: bad " + std::string(what) + " '" + std::string(word) + "'");
    }
    return value;
}

RawField parse_field(std::string_view line)
{
    const auto words = split_words(line);
    if (words.size() < 3) {
        throw FormatError("message: truncated field line '" + std::string(line) + "'");
    }
    const auto rows = parse_number<long>(words[1], "row count");
    const auto cols = parse_number<long>(words[2], "column count");
    if (rows < 0 || cols < 0 || words.size() != static_cast<std::size_t>(3 + rows * cols)) {
        throw FormatError("message: field '" + std::string(words[0]) + "' has the wrong number of values");
    }
    RawField f{std::string(words[0]), Matrix(rows, cols)};
    std::size_t k = 3;
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            f.value(r, c) = parse_number<double>(words[k++], "value");
        }
    }
    return f;
}

Vector as_vector(const RawField& f)
{
    if (f.value.cols() != 1) {
        throw FormatError("message: field '" + f.name + "' must be a column vector");
    }
    return f.value.col(0);
}

}  // namespace

Level Message::level() const
{
    return std::visit(Overloaded{
                          [](const L1Payload&) { return Level::L1; },
                          [](const L2Payload&) { return Level::L2; },
                          [](const L3Payload&) { return Level::L3; },
                      },
                      payload);
}

std::vector<std::string> level_fields(Level level)
{
    switch (level) {
    case Level::L1:
        return {"x_a", "P_a"};
    case Level::L2:
        return {"x_a", "P_a", "HtRinvH"};
    case Level::L3:
        return {"x_pred", "P_pred", "HtRinvz", "HtRinvH"};
    }
    return {};
}

std::vector<std::string> Message::field_names() const { return level_fields(level()); }

std::string serialize(const Message& message)
{
    std::string out = "message ";
    out += to_string(message.level());
    out += ' ';
    out += std::to_string(message.sender);
    out += '\n';
    std::visit(Overloaded{
                   [&](const L1Payload& p) {
                       write_field(out, "x_a", p.x_a);
                       write_field(out, "P_a", p.p_a.matrix());
                   },
                   [&](const L2Payload& p) {
                       write_field(out, "x_a", p.x_a);
                       write_field(out, "P_a", p.p_a.matrix());
                       write_field(out, "HtRinvH", p.info_matrix.matrix());
                   },
                   [&](const L3Payload& p) {
                       write_field(out, "x_pred", p.x_pred);
                       write_field(out, "P_pred", p.p_pred.matrix());
                       write_field(out, "HtRinvz", p.info_vector);
                       write_field(out, "HtRinvH", p.info_matrix.matrix());
                   },
               },
               message.payload);
    out += "end\n";
    return out;
}

Message deserialize(std::string_view text)
{
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        if (end > pos) {
            lines.push_back(text.substr(pos, end - pos));
        }
        pos = end + 1;
    }
    if (lines.size() < 2 || lines.back() != "end") {
        throw FormatError("message: missing header or end marker");
    }
    const auto header = split_words(lines.front());
    if (header.size() != 3 || header[0] != "message") {
        throw FormatError("message: bad header '" + std::string(lines.front()) + "'");
    }
    Level level;
    try {
        level = parse_level(header[1]);
    } catch (const Error&) {
        throw FormatError("message: unknown level '" + std::string(header[1]) + "'");
    }
    Message msg;
    msg.sender = parse_number<std::size_t>(header[2], "sender");

    const auto expected = level_fields(level);
    if (lines.size() != expected.size() + 2) {
        throw FormatError("message: level " + std::string(to_string(level)) + " carries exactly " +
                          std::to_string(expected.size()) + " fields");
    }
    std::vector<RawField> fields;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        fields.push_back(parse_field(lines[i + 1]));
        if (fields.back().name != expected[i]) {
            throw FormatError("message: expected field '" + expected[i] + "', found '" +
                              fields.back().name + "'");
        }
    }
    switch (level) {
    case Level::L1:
        msg.payload = L1Payload{as_vector(fields[0]), SpdMatrix::spd(fields[1].value)};
        break;
    case Level::L2:
        msg.payload = L2Payload{as_vector(fields[0]), SpdMatrix::spd(fields[1].value),
                                SpdMatrix::psd(fields[2].value)};
        break;
    case Level::L3:
        msg.payload = L3Payload{as_vector(fields[0]), SpdMatrix::spd(fields[1].value), as_vector(fields[2]),
                                SpdMatrix::psd(fields[3].value)};
        break;
    }
    return msg;
}

}  // namespace esci
