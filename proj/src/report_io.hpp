#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sweep.hpp"
#include "training.hpp"

namespace entroloss {

/// `epoch,train_loss,val_loss,train_acc,val_acc`, one row per record.
std::string report_csv(std::span<const EpochRecord> records);
/// Throws DomainError on a wrong header, a short or non-numeric row, or an
/// epoch column that is not 0, 1, 2, ...
std::vector<EpochRecord> parse_report_csv(const std::string& text);

/// `alpha,epochs,accuracy,sensitivity,specificity`, one row per cell in grid
/// order. Failed cells and undefined rates leave the field empty.
std::string sweep_long_csv(const SweepTable& table);
/// Accuracy grid: header `epochs,alpha=<a>,...`, one row per epoch count.
std::string sweep_grid_csv(const SweepTable& table);

/// Shortest text that reads back to the same double.
std::string format_number(double v);

/// Whole-file text write; throws IoError naming the path.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace entroloss
