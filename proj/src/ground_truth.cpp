#include "lungcrowd/ground_truth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lungcrowd/error.hpp"

namespace lungcrowd {

namespace {

constexpr std::string_view kHeader = "nodule_id,patient_id,diameter_mm,location,attachment,z,x,y,w,h";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
T parse_cell(const std::string& cell, const std::string& where) {
  T value{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    fail(ErrorKind::format, where + ": bad number '" + cell + "'");
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

SizeBin size_bin_for(double diameter_mm) {
  if (diameter_mm <= 4.0) return SizeBin::le4;
  if (diameter_mm <= 6.0) return SizeBin::gt4_le6;
  if (diameter_mm <= 8.0) return SizeBin::gt6_le8;
  if (diameter_mm <= 10.0) return SizeBin::gt8_le10;
  return SizeBin::gt10;
}

std::string_view to_string(SizeBin bin) {
  switch (bin) {
    case SizeBin::le4: return "<=4";
    case SizeBin::gt4_le6: return "4-6";
    case SizeBin::gt6_le8: return "6-8";
    case SizeBin::gt8_le10: return "8-10";
    case SizeBin::gt10: return ">10";
  }
  return "?";
}

SizeBin size_bin_from_string(std::string_view text) {
  for (auto bin : kAllSizeBins)
    if (to_string(bin) == text) return bin;
  fail(ErrorKind::format, "unknown size bin '" + std::string(text) + "'");
}

SizeClass size_class_for(SizeBin bin) {
  if (bin == SizeBin::le4) return SizeClass::small;
  if (bin == SizeBin::gt10) return SizeClass::large;
  return SizeClass::medium;
}

std::string_view to_string(SizeClass c) {
  switch (c) {
    case SizeClass::small: return "small";
    case SizeClass::medium: return "medium";
    case SizeClass::large: return "large";
  }
  return "?";
}

std::string_view to_string(Location l) { return l == Location::peripheral ? "peripheral" : "non-peripheral"; }

Location location_from_string(std::string_view text) {
  for (auto l : kAllLocations)
    if (to_string(l) == text) return l;
  fail(ErrorKind::format, "unknown location '" + std::string(text) + "'");
}

std::string_view to_string(Attachment a) {
  switch (a) {
    case Attachment::pleural: return "pleural";
    case Attachment::vessel: return "vessel";
    case Attachment::hilar: return "hilar";
    case Attachment::central: return "central";
  }
  return "?";
}

Attachment attachment_from_string(std::string_view text) {
  for (auto a : kAllAttachments)
    if (to_string(a) == text) return a;
  fail(ErrorKind::format, "unknown attachment '" + std::string(text) + "'");
}

SliceRange GroundTruthNodule::slices() const {
  SliceRange r{extent.front().z, extent.front().z};
  for (const auto& e : extent) {
    r.z0 = std::min(r.z0, e.z);
    r.z1 = std::max(r.z1, e.z);
  }
  return r;
}

std::optional<Box> GroundTruthNodule::box_on(int z) const {
  for (const auto& e : extent)
    if (e.z == z) return e.box;
  return std::nullopt;
}

void GroundTruthNodule::validate() const {
  if (nodule_id.empty()) fail(ErrorKind::invalid_argument, "nodule id is empty");
  if (!(diameter_mm > 0)) fail(ErrorKind::invalid_argument, "nodule " + nodule_id + ": diameter must be > 0");
  if (extent.empty()) fail(ErrorKind::invalid_argument, "nodule " + nodule_id + ": empty extent");
  for (const auto& e : extent)
    if (e.box.w <= 0 || e.box.h <= 0 || e.box.x < 0 || e.box.y < 0 || e.z < 0)
      fail(ErrorKind::invalid_argument, "nodule " + nodule_id + ": invalid extent box on slice " + std::to_string(e.z));
}

void validate_within(const GroundTruthNodule& nodule, const Dims3& dims) {
  const Box plane{0, 0, dims.nx, dims.ny};
  for (const auto& e : nodule.extent)
    if (e.z >= dims.nz || !contains(plane, e.box))
      fail(ErrorKind::invalid_argument, "nodule " + nodule.nodule_id + ": extent outside volume on slice " +
                                            std::to_string(e.z));
}

std::vector<GroundTruthNodule> parse_ground_truth_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) fail(ErrorKind::format, source + ": empty ground-truth file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) fail(ErrorKind::format, source + ":1: unexpected header '" + line + "'");

  std::vector<GroundTruthNodule> nodules;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cells = split_csv(line);
    if (cells.size() != 10) fail(ErrorKind::format, where + ": expected 10 columns, got " + std::to_string(cells.size()));

    GroundTruthNodule row;
    row.nodule_id = cells[0];
    row.patient_id = cells[1];
    row.diameter_mm = parse_cell<double>(cells[2], where);
    try {
      row.location = location_from_string(cells[3]);
      row.attachment = attachment_from_string(cells[4]);
    } catch (const Error& e) {
      fail(ErrorKind::format, where + ": " + e.what());
    }
    ExtentSlice slice{parse_cell<int>(cells[5], where),
                      Box{parse_cell<int>(cells[6], where), parse_cell<int>(cells[7], where),
                          parse_cell<int>(cells[8], where), parse_cell<int>(cells[9], where)}};

    auto it = index.find(row.nodule_id);
    if (it == index.end()) {
      row.extent.push_back(slice);
      index.emplace(row.nodule_id, nodules.size());
      nodules.push_back(std::move(row));
    } else {
      auto& existing = nodules[it->second];
      if (existing.patient_id != row.patient_id || existing.diameter_mm != row.diameter_mm ||
          existing.location != row.location || existing.attachment != row.attachment)
        fail(ErrorKind::format, where + ": nodule " + row.nodule_id + " attributes differ between rows");
      if (existing.box_on(slice.z))
        fail(ErrorKind::format, where + ": nodule " + row.nodule_id + " repeats slice " + std::to_string(slice.z));
      existing.extent.push_back(slice);
    }
  }
  for (auto& n : nodules) {
    try {
      n.validate();
    } catch (const Error& e) {
      fail(ErrorKind::format, source + ": " + e.what());
    }
  }
  return nodules;
}

std::vector<GroundTruthNodule> load_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_ground_truth_csv(ss.str(), path.string());
}

std::string format_ground_truth_csv(const std::vector<GroundTruthNodule>& nodules) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& n : nodules) {
    for (const auto& e : n.extent) {
      out += n.nodule_id + ',' + n.patient_id + ',' + format_double(n.diameter_mm) + ',' +
             std::string(to_string(n.location)) + ',' + std::string(to_string(n.attachment)) + ',' +
             std::to_string(e.z) + ',' + std::to_string(e.box.x) + ',' + std::to_string(e.box.y) + ',' +
             std::to_string(e.box.w) + ',' + std::to_string(e.box.h) + '\n';
    }
  }
  return out;
}

void save_ground_truth_csv(const std::vector<GroundTruthNodule>& nodules, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << format_ground_truth_csv(nodules);
}

DatasetStats summarize_ground_truth(const std::vector<GroundTruthNodule>& nodules) {
  DatasetStats stats;
  for (const auto& n : nodules) {
    ++stats.nodules_per_patient[n.patient_id];
    ++stats.size_histogram[bin_index(n.size_bin())];
    ++stats.total;
  }
  if (stats.nodules_per_patient.empty()) return stats;
  const double patients = static_cast<double>(stats.nodules_per_patient.size());
  stats.mean_per_patient = stats.total / patients;
  double ss = 0;
  for (const auto& [id, count] : stats.nodules_per_patient) ss += (count - stats.mean_per_patient) * (count - stats.mean_per_patient);
  stats.stddev_per_patient = std::sqrt(ss / patients);
  return stats;
}

}  // namespace lungcrowd
