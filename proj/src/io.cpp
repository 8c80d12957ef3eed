#include "masktrack/io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace masktrack::io {

namespace {

using nlohmann::json;

json rle_to_json(const RleMask& m) {
  json j;
  j["size"] = {m.height, m.width};
  j["counts"] = m.counts;
  return j;
}

RleMask rle_from_json(const json& j) {
  RleMask m;
  const auto& size = j.at("size");
  m.height = size.at(0).get<int>();
  m.width = size.at(1).get<int>();
  m.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  validate(m);
  return m;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
  if (!out) throw std::runtime_error("write failed for " + path);
}

json segmentations_to_json(const std::vector<std::optional<RleMask>>& segs) {
  json arr = json::array();
  for (const auto& s : segs) {
    if (s.has_value() && area(*s) > 0)
      arr.push_back(rle_to_json(*s));
    else
      arr.push_back(nullptr);
  }
  return arr;
}

std::vector<std::optional<RleMask>> segmentations_from_json(const json& arr) {
  std::vector<std::optional<RleMask>> out;
  for (const auto& s : arr) {
    if (s.is_null())
      out.push_back(std::nullopt);
    else
      out.push_back(rle_from_json(s));
  }
  return out;
}

}  // namespace

void save_proposals(const std::string& path, const ProposalFile& file) {
  json root;
  root["videos"] = json::array();
  for (const auto& v : file.videos) {
    json jv;
    jv["video_id"] = v.info.id;
    jv["height"] = v.info.height;
    jv["width"] = v.info.width;
    jv["length"] = v.info.length;
    json props = json::array();
    for (const auto& frame : v.by_frame)
      for (const auto& p : frame) {
        json jp;
        jp["frame"] = p.frame;
        jp["category_id"] = p.category_id;
        jp["score"] = p.score;
        jp["segmentation"] = rle_to_json(p.mask);
        props.push_back(std::move(jp));
      }
    jv["proposals"] = std::move(props);
    root["videos"].push_back(std::move(jv));
  }
  write_json_file(path, root);
}

ProposalFile load_proposals(const std::string& path) {
  const json root = load_json_file(path);
  ProposalFile file;
  for (const auto& jv : root.at("videos")) {
    ProposalVideo v;
    v.info.id = jv.at("video_id").get<int>();
    v.info.height = jv.at("height").get<int>();
    v.info.width = jv.at("width").get<int>();
    v.info.length = jv.at("length").get<int>();
    if (v.info.length < 1) throw std::invalid_argument("proposals: bad video length");
    v.by_frame.resize(v.info.length);
    for (const auto& jp : jv.at("proposals")) {
      pipeline::InstanceProposal p;
      p.frame = jp.at("frame").get<int>();
      p.category_id = jp.at("category_id").get<int>();
      p.score = jp.at("score").get<double>();
      p.mask = rle_from_json(jp.at("segmentation"));
      if (p.frame < 0 || p.frame >= v.info.length)
        throw std::invalid_argument("proposals: frame index outside the video");
      if (p.mask.height != v.info.height || p.mask.width != v.info.width)
        throw std::invalid_argument("proposals: mask canvas does not match the video");
      v.by_frame[p.frame].push_back(std::move(p));
    }
    file.videos.push_back(std::move(v));
  }
  return file;
}

void save_results(const std::string& path, const std::vector<eval::ResultTrack>& results) {
  json arr = json::array();
  for (const auto& r : results) {
    json jr;
    jr["video_id"] = r.video_id;
    jr["category_id"] = r.category_id;
    jr["score"] = r.score;
    jr["segmentations"] = segmentations_to_json(r.segmentations);
    arr.push_back(std::move(jr));
  }
  write_json_file(path, arr);
}

std::vector<eval::ResultTrack> load_results(const std::string& path) {
  const json arr = load_json_file(path);
  if (!arr.is_array()) throw std::invalid_argument("results: top level must be an array");
  std::vector<eval::ResultTrack> out;
  for (const auto& jr : arr) {
    eval::ResultTrack r;
    r.video_id = jr.at("video_id").get<int>();
    r.category_id = jr.at("category_id").get<int>();
    r.score = jr.at("score").get<double>();
    r.segmentations = segmentations_from_json(jr.at("segmentations"));
    out.push_back(std::move(r));
  }
  return out;
}

void save_gt(const std::string& path, const eval::GtAnnotations& gt) {
  json root;
  root["videos"] = json::array();
  for (const auto& v : gt.videos)
    root["videos"].push_back(
        {{"id", v.id}, {"height", v.height}, {"width", v.width}, {"length", v.length}});
  root["categories"] = json::array();
  for (const auto& c : gt.categories)
    root["categories"].push_back({{"id", c.id}, {"name", c.name}});
  root["annotations"] = json::array();
  for (const auto& t : gt.tracks) {
    json jt;
    jt["id"] = t.id;
    jt["video_id"] = t.video_id;
    jt["category_id"] = t.category_id;
    jt["segmentations"] = segmentations_to_json(t.segmentations);
    root["annotations"].push_back(std::move(jt));
  }
  write_json_file(path, root);
}

eval::GtAnnotations load_gt(const std::string& path) {
  const json root = load_json_file(path);
  eval::GtAnnotations gt;
  for (const auto& jv : root.at("videos"))
    gt.videos.push_back({jv.at("id").get<int>(), jv.at("height").get<int>(),
                         jv.at("width").get<int>(), jv.at("length").get<int>()});
  for (const auto& jc : root.at("categories"))
    gt.categories.push_back({jc.at("id").get<int>(), jc.at("name").get<std::string>()});
  for (const auto& jt : root.at("annotations")) {
    eval::GtTrack t;
    t.id = jt.at("id").get<int>();
    t.video_id = jt.at("video_id").get<int>();
    t.category_id = jt.at("category_id").get<int>();
    t.segmentations = segmentations_from_json(jt.at("segmentations"));
    gt.tracks.push_back(std::move(t));
  }
  return gt;
}

Image load_png(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (fp) std::fclose(fp);
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw std::runtime_error("failed to decode " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  std::vector<std::uint8_t> row(static_cast<std::size_t>(width) * 3);
  Image img(height, width);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>(row[x * 3 + c] / 255.0);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

void save_png(const std::string& path, const Image& image) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (fp) std::fclose(fp);
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("failed to encode " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(1.f, std::max(0.f, image.at(c, y, x)));
        row[x * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.f));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::vector<eval::ResultTrack> tracks_to_results(const std::vector<pipeline::Track>& tracks,
                                                 int video_id, int n_frames) {
  std::vector<eval::ResultTrack> out;
  for (const auto& t : tracks) {
    eval::ResultTrack r;
    r.video_id = video_id;
    r.category_id = t.category_id;
    r.score = t.score();
    r.segmentations.assign(n_frames, std::nullopt);
    bool any = false;
    for (const auto& [frame, mask] : t.masks) {
      if (frame < 0 || frame >= n_frames)
        throw std::invalid_argument("tracks_to_results: frame outside the video");
      if (area(mask) > 0) {
        r.segmentations[frame] = mask;
        any = true;
      }
    }
    if (any) out.push_back(std::move(r));
  }
  return out;
}

std::vector<pipeline::Track> results_to_tracks(const std::vector<eval::ResultTrack>& results,
                                               int video_id) {
  std::vector<pipeline::Track> out;
  int next_id = 1;
  for (const auto& r : results) {
    if (r.video_id != video_id) continue;
    pipeline::Track t;
    t.id = next_id++;
    t.category_id = r.category_id;
    t.score_sum = r.score;
    t.score_count = 1;
    bool first = true;
    for (int f = 0; f < static_cast<int>(r.segmentations.size()); ++f) {
      if (!r.segmentations[f].has_value()) continue;
      if (first) {
        t.birth_frame = f;
        first = false;
      }
      t.masks[f] = *r.segmentations[f];
      t.sources[f] = pipeline::MaskSource::Detected;
    }
    if (!first) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace masktrack::io
