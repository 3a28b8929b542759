#include "report_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "errors.hpp"

namespace entroloss {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw DomainError(fmt::format("line {}: '{}' is not a finite number", line_no, s));
  }
  return v;
}

std::string optional_field(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string{};
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

std::string report_csv(std::span<const EpochRecord> records) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{}\n", r.epoch, format_number(r.train_loss),
                       format_number(r.val_loss), format_number(r.train_accuracy),
                       format_number(r.val_accuracy));
  }
  return out;
}

std::vector<EpochRecord> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<EpochRecord> records;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "epoch,train_loss,val_loss,train_acc,val_acc") {
        throw DomainError(fmt::format("line {}: unexpected report header '{}'", line_no, line));
      }
      header = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 5) {
      throw DomainError(fmt::format("line {}: expected 5 fields, got {}", line_no, f.size()));
    }
    const double epoch = parse_double(f[0], line_no);
    if (epoch != static_cast<double>(records.size())) {
      throw DomainError(fmt::format("line {}: expected epoch {}, got {}", line_no,
                                    records.size(), f[0]));
    }
    EpochRecord r;
    r.epoch = records.size();
    r.train_loss = parse_double(f[1], line_no);
    r.val_loss = parse_double(f[2], line_no);
    r.train_accuracy = parse_double(f[3], line_no);
    r.val_accuracy = parse_double(f[4], line_no);
    records.push_back(r);
  }
  if (!header) {
    throw DomainError("report is empty");
  }
  if (records.empty()) {
    throw DomainError("report has a header but no rows");
  }
  return records;
}

std::string sweep_long_csv(const SweepTable& table) {
  std::string out = "alpha,epochs,accuracy,sensitivity,specificity\n";
  for (const auto& c : table.cells) {
    if (c.ok) {
      out += fmt::format("{},{},{},{},{}\n", format_number(c.alpha), c.epochs,
                         format_number(c.metrics.accuracy), optional_field(c.metrics.sensitivity),
                         optional_field(c.metrics.specificity));
    } else {
      out += fmt::format("{},{},,,\n", format_number(c.alpha), c.epochs);
    }
  }
  return out;
}

std::string sweep_grid_csv(const SweepTable& table) {
  std::string out = "epochs";
  for (double a : table.alphas) {
    out += ",alpha=" + format_number(a);
  }
  out += '\n';
  for (std::size_t n : table.epoch_counts) {
    out += std::to_string(n);
    for (double a : table.alphas) {
      const auto& c = table.at(n, a);
      out += ',';
      if (c.ok) out += format_number(c.metrics.accuracy);
    }
    out += '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace entroloss
