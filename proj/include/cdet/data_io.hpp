#pragma once

#include "cdet/dataset.hpp"
#include "cdet/image.hpp"
#include "cdet/voc.hpp"

namespace cdet {

// Joins a manifest record's PNG and XML into a full sample.
inline ImageSample load_sample(const ManifestRecord& rec) {
  ImageSample s;
  s.id = rec.id;
  s.pixels = read_png(rec.image_path);
  VocAnnotation ann = parse_voc_xml(rec.xml_path);
  if (ann.width != static_cast<int>(s.pixels.dim(2)) ||
      ann.height != static_cast<int>(s.pixels.dim(1)))
    throw DataError("sample " + rec.id + ": XML size does not match image");
  s.width = ann.width;
  s.height = ann.height;
  s.boxes = ann.boxes;
  return s;
}

}  // namespace cdet
