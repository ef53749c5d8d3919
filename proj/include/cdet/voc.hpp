#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdet/config.hpp"
#include "cdet/geometry.hpp"

namespace cdet {

// Box annotations as stored in a LabelImg-style XML file, without pixels.
struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<BoundingBox> boxes;
};

namespace detail {

// Minimal tag scanner for the fixed LabelImg schema. Returns the text inside
// the first <tag>...</tag> at or after `from`; `end` reports where it closed.
inline bool find_tag(const std::string& s, const std::string& tag, std::size_t from,
                     std::string& content, std::size_t& end) {
  const std::string open = "<" + tag + ">";
  const std::string close = "</" + tag + ">";
  const std::size_t a = s.find(open, from);
  if (a == std::string::npos) return false;
  const std::size_t b = s.find(close, a + open.size());
  if (b == std::string::npos) return false;
  content = s.substr(a + open.size(), b - a - open.size());
  end = b + close.size();
  return true;
}

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("VOC XML: bad number in <" + what + ">: '" + s + "'");
  }
}

inline std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline VocAnnotation parse_voc_xml_string(const std::string& xml) {
  VocAnnotation ann;
  std::string content;
  std::size_t pos = 0;

  std::string size_block;
  std::size_t size_end = 0;
  if (!detail::find_tag(xml, "size", 0, size_block, size_end))
    throw DataError("VOC XML: missing <size>");
  std::size_t dummy = 0;
  if (!detail::find_tag(size_block, "width", 0, content, dummy))
    throw DataError("VOC XML: missing <width>");
  ann.width = static_cast<int>(detail::parse_number(detail::strip(content), "width"));
  if (!detail::find_tag(size_block, "height", 0, content, dummy))
    throw DataError("VOC XML: missing <height>");
  ann.height = static_cast<int>(detail::parse_number(detail::strip(content), "height"));
  if (ann.width <= 0 || ann.height <= 0) throw DataError("VOC XML: non-positive image size");

  if (detail::find_tag(xml, "filename", 0, content, dummy))
    ann.filename = detail::strip(content);

  pos = 0;
  std::string object_block;
  std::size_t object_end = 0;
  while (detail::find_tag(xml, "object", pos, object_block, object_end)) {
    pos = object_end;
    if (!detail::find_tag(object_block, "name", 0, content, dummy))
      throw DataError("VOC XML: object missing <name>");
    const std::string name = detail::strip(content);
    const int class_id = class_id_of(name);
    if (class_id < 0) throw DataError("VOC XML: unknown class '" + name + "'");

    std::string bnd;
    if (!detail::find_tag(object_block, "bndbox", 0, bnd, dummy))
      throw DataError("VOC XML: object missing <bndbox>");
    BoundingBox box;
    box.class_id = class_id;
    auto coord = [&](const char* tag) {
      std::string v;
      std::size_t e = 0;
      if (!detail::find_tag(bnd, tag, 0, v, e))
        throw DataError(std::string("VOC XML: bndbox missing <") + tag + ">");
      return static_cast<float>(detail::parse_number(detail::strip(v), tag));
    };
    box.x_min = coord("xmin");
    box.y_min = coord("ymin");
    box.x_max = coord("xmax");
    box.y_max = coord("ymax");
    if (!box.valid()) throw DataError("VOC XML: degenerate box (xmax <= xmin or ymax <= ymin)");
    if (box.x_max > static_cast<float>(ann.width) || box.y_max > static_cast<float>(ann.height))
      throw DataError("VOC XML: box outside image bounds");
    ann.boxes.push_back(box);
  }
  return ann;
}

inline VocAnnotation parse_voc_xml(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open annotation: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_voc_xml_string(ss.str());
}

inline std::string voc_xml_to_string(const VocAnnotation& ann) {
  std::ostringstream os;
  os << "<annotation>\n";
  os << "  <folder>images</folder>\n";
  os << "  <filename>" << ann.filename << "</filename>\n";
  os << "  <size>\n";
  os << "    <width>" << ann.width << "</width>\n";
  os << "    <height>" << ann.height << "</height>\n";
  os << "    <depth>3</depth>\n";
  os << "  </size>\n";
  for (const auto& b : ann.boxes) {
    os << "  <object>\n";
    os << "    <name>" << class_names()[static_cast<std::size_t>(b.class_id)] << "</name>\n";
    os << "    <pose>Unspecified</pose>\n";
    os << "    <truncated>0</truncated>\n";
    os << "    <difficult>0</difficult>\n";
    os << "    <bndbox>\n";
    os << "      <xmin>" << b.x_min << "</xmin>\n";
    os << "      <ymin>" << b.y_min << "</ymin>\n";
    os << "      <xmax>" << b.x_max << "</xmax>\n";
    os << "      <ymax>" << b.y_max << "</ymax>\n";
    os << "    </bndbox>\n";
    os << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

inline void write_voc_xml(const std::string& path, const VocAnnotation& ann) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write annotation: " + path);
  f << voc_xml_to_string(ann);
}

}  // namespace cdet
