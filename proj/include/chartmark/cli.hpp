#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "chartmark/pipeline.hpp"

namespace chartmark {

inline constexpr std::string_view kVersionString = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line (args excludes the program name). Usage errors print
// the synopsis to `err` and return 2 before any file is written; domain
// errors return 1.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GalleryResult {
  std::size_t pages = 0;
  std::size_t images = 0;
};

// Writes <gallery_dir>/index.html plus one page per chart with the vanilla
// render, each edited render with its detected box, the CoT steps and the
// chart's instruction records, reading artifacts from `run_dir`. Images are
// re-rendered into <gallery_dir>/img and all links are relative.
GalleryResult write_gallery(const DatasetManifest& manifest, const std::string& run_dir,
                            const std::string& gallery_dir);

std::string html_escape(std::string_view s);

}  // namespace chartmark
