#ifndef EVBLUR_IO_HPP
#define EVBLUR_IO_HPP

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evblur/core.hpp"

// File formats, all little-endian:
//   events  "EVT1": u16 width, u16 height, u64 t_start, u64 t_end, u64 count
//           (32-byte header), then 16 bytes per event: u64 t, u16 x, u16 y,
//           u8 polarity (0 => -1, 1 => +1), 3 zero pad bytes.
//   events  ".csv": "# window <t_start> <t_end> <width> <height>" sidecar line,
//           a "t,x,y,p" header, then one event per row.
//   images  "P5":   binary PGM, maxval 255, value = byte / 255.
//   images  "PFG1": u16 width, u16 height, then f32 per pixel.
//   voxels  "VOX1": u16 width, u16 height, u16 channels, u16 pad, then f32 per
//           cell, channel-outer row-major.
namespace evblur::io
{
namespace detail
{
inline void put_u16(std::string & out, std::uint16_t v)
{
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u64(std::string & out, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

inline void put_f32(std::string & out, float v)
{
  static_assert(sizeof(float) == 4);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

class ByteReader
{
public:
  ByteReader(std::string_view data, std::string name) : d_(data), name_(std::move(name)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }

  std::uint16_t u16()
  {
    auto b = take(2);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0]) |
                                      (static_cast<std::uint8_t>(b[1]) << 8));
  }

  std::uint64_t u64()
  {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    }
    return v;
  }

  float f32()
  {
    auto b = take(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
      bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    }
    return std::bit_cast<float>(bits);
  }

  void expect_magic(std::string_view magic)
  {
    if (d_.size() < off_ + magic.size() || d_.substr(off_, magic.size()) != magic) {
      throw Error(name_ + ": bad magic, expected " + std::string(magic));
    }
    off_ += magic.size();
  }

  void expect_end() const
  {
    if (off_ != d_.size()) {
      throw Error(name_ + ": trailing bytes after payload");
    }
  }

private:
  std::string_view take(std::size_t n)
  {
    if (d_.size() - off_ < n) {
      throw Error(name_ + ": truncated file");
    }
    std::string_view b = d_.substr(off_, n);
    off_ += n;
    return b;
  }

  std::string_view d_;
  std::size_t off_{0};
  std::string name_;
};

inline std::string slurp(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void dump(const std::filesystem::path & path, std::string_view data)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path.string() + " for writing");
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) {
    throw Error("write failed for " + path.string());
  }
}

template <typename T>
T parse_number(std::string_view tok, const std::string & context)
{
  T value{};
  const char * first = tok.data();
  const char * last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || tok.empty()) {
    throw Error(context + ": bad number '" + std::string(tok) + "'");
  }
  return value;
}
}  // namespace detail

inline std::string encode_events(const EventStream & s)
{
  std::string out;
  out.reserve(32 + 16 * s.size());
  out += "EVT1";
  detail::put_u16(out, static_cast<std::uint16_t>(s.width()));
  detail::put_u16(out, static_cast<std::uint16_t>(s.height()));
  detail::put_u64(out, s.t_start());
  detail::put_u64(out, s.t_end());
  detail::put_u64(out, s.size());
  for (const Event & e : s.events()) {
    detail::put_u64(out, e.t);
    detail::put_u16(out, e.x);
    detail::put_u16(out, e.y);
    out.push_back(static_cast<char>(e.p > 0 ? 1 : 0));
    out.append(3, '\0');
  }
  return out;
}

inline EventStream decode_events(std::string_view data, const std::string & name)
{
  detail::ByteReader r(data, name);
  r.expect_magic("EVT1");
  const int width = r.u16();
  const int height = r.u16();
  const std::uint64_t t_start = r.u64();
  const std::uint64_t t_end = r.u64();
  const std::uint64_t count = r.u64();
  std::vector<Event> events;
  events.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.t = r.u64();
    e.x = r.u16();
    e.y = r.u16();
    const std::uint8_t p = r.u8();
    if (p > 1) {
      throw Error(name + ": polarity byte must be 0 or 1");
    }
    for (int b = 0; b < 3; ++b) {
      if (r.u8() != 0) {
        throw Error(name + ": nonzero pad byte");
      }
    }
    e.p = p ? 1 : -1;
    events.push_back(e);
  }
  r.expect_end();
  return EventStream::from_canonical(width, height, t_start, t_end, std::move(events));
}

inline std::string encode_events_csv(const EventStream & s)
{
  std::string out = "# window " + std::to_string(s.t_start()) + " " + std::to_string(s.t_end()) +
                    " " + std::to_string(s.width()) + " " + std::to_string(s.height()) + "\n";
  out += "t,x,y,p\n";
  for (const Event & e : s.events()) {
    out += std::to_string(e.t);
    out += ',';
    out += std::to_string(e.x);
    out += ',';
    out += std::to_string(e.y);
    out += ',';
    out += (e.p > 0 ? "1" : "-1");
    out += '\n';
  }
  return out;
}

inline EventStream decode_events_csv(std::string_view data, const std::string & name)
{
  std::istringstream in{std::string(data)};
  std::string line;
  bool have_window = false;
  bool have_header = false;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;
  int width = 0;
  int height = 0;
  std::vector<Event> events;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const std::string context = name + ":" + std::to_string(lineno);
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tag;
      if (hs >> tag && tag == "window") {
        if (have_window) {
          throw Error(context + ": duplicate window line");
        }
        std::string a, b, c, d, extra;
        if (!(hs >> a >> b >> c >> d) || (hs >> extra)) {
          throw Error(context + ": window line needs t_start t_end width height");
        }
        t_start = detail::parse_number<std::uint64_t>(a, context);
        t_end = detail::parse_number<std::uint64_t>(b, context);
        width = detail::parse_number<int>(c, context);
        height = detail::parse_number<int>(d, context);
        have_window = true;
      }
      continue;
    }
    if (!have_header) {
      if (line != "t,x,y,p") {
        throw Error(context + ": expected header 't,x,y,p'");
      }
      have_header = true;
      continue;
    }
    std::string_view rest = line;
    std::string_view field[4];
    for (int i = 0; i < 4; ++i) {
      const std::size_t comma = rest.find(',');
      if (i < 3) {
        if (comma == std::string_view::npos) {
          throw Error(context + ": expected 4 comma-separated fields");
        }
        field[i] = rest.substr(0, comma);
        rest.remove_prefix(comma + 1);
      } else {
        if (comma != std::string_view::npos) {
          throw Error(context + ": expected 4 comma-separated fields");
        }
        field[i] = rest;
      }
    }
    Event e;
    e.t = detail::parse_number<std::uint64_t>(field[0], context);
    e.x = detail::parse_number<std::uint16_t>(field[1], context);
    e.y = detail::parse_number<std::uint16_t>(field[2], context);
    const int p = detail::parse_number<int>(field[3], context);
    if (p != 1 && p != -1) {
      throw Error(context + ": polarity must be -1 or 1");
    }
    e.p = static_cast<std::int8_t>(p);
    events.push_back(e);
  }
  if (!have_window) {
    throw Error(name + ": missing '# window t_start t_end width height' line");
  }
  if (!have_header) {
    throw Error(name + ": missing 't,x,y,p' header");
  }
  return EventStream::from_canonical(width, height, t_start, t_end, std::move(events));
}

inline void write_events(const EventStream & s, const std::filesystem::path & path)
{
  if (path.extension() == ".csv") {
    detail::dump(path, encode_events_csv(s));
  } else {
    detail::dump(path, encode_events(s));
  }
}

inline EventStream read_events(const std::filesystem::path & path)
{
  const std::string data = detail::slurp(path);
  if (path.extension() == ".csv") {
    return decode_events_csv(data, path.filename().string());
  }
  return decode_events(data, path.filename().string());
}

inline std::string encode_pgm(const Image & img)
{
  std::string out =
    "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  out.reserve(out.size() + img.size());
  for (double v : img.values()) {
    const long q = std::lround(v * 255.0);
    out.push_back(static_cast<char>(std::clamp(q, 0L, 255L)));
  }
  return out;
}

inline Image decode_pgm(std::string_view data, const std::string & name)
{
  // header tokens may be separated by whitespace or '#' comment lines
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < data.size()) {
      const char ch = data[pos];
      if (ch == '#') {
        while (pos < data.size() && data[pos] != '\n') {
          ++pos;
        }
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) {
      ++pos;
    }
    if (start == pos) {
      throw Error(name + ": truncated header");
    }
    return std::string(data.substr(start, pos - start));
  };

  if (next_token() != "P5") {
    throw Error(name + ": not a binary PGM (P5) file");
  }
  const int width = detail::parse_number<int>(next_token(), name);
  const int height = detail::parse_number<int>(next_token(), name);
  const int maxval = detail::parse_number<int>(next_token(), name);
  if (maxval != 255) {
    throw Error(name + ": only maxval 255 is supported");
  }
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    throw Error(name + ": missing raster separator");
  }
  ++pos;
  evblur::detail::check_dims(width, height);
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  if (data.size() - pos < pixels) {
    throw Error(name + ": truncated raster");
  }
  if (data.size() - pos > pixels) {
    throw Error(name + ": trailing bytes after raster");
  }
  std::vector<double> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    values[i] = static_cast<std::uint8_t>(data[pos + i]) / 255.0;
  }
  return Image::from_values(width, height, std::move(values));
}

inline std::string encode_pfg(const Image & img)
{
  std::string out = "PFG1";
  detail::put_u16(out, static_cast<std::uint16_t>(img.width()));
  detail::put_u16(out, static_cast<std::uint16_t>(img.height()));
  for (double v : img.values()) {
    detail::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline Image decode_pfg(std::string_view data, const std::string & name)
{
  detail::ByteReader r(data, name);
  r.expect_magic("PFG1");
  const int width = r.u16();
  const int height = r.u16();
  evblur::detail::check_dims(width, height);
  std::vector<double> values(static_cast<std::size_t>(width) * height);
  for (double & v : values) {
    v = r.f32();
  }
  r.expect_end();
  return Image::from_values_unclamped(width, height, std::move(values));
}

inline void write_image(const Image & img, const std::filesystem::path & path)
{
  const auto ext = path.extension();
  if (ext == ".pgm") {
    detail::dump(path, encode_pgm(img));
  } else if (ext == ".pfg") {
    detail::dump(path, encode_pfg(img));
  } else {
    throw Error("unsupported image extension '" + ext.string() + "' (use .pgm or .pfg)");
  }
}

inline Image read_image(const std::filesystem::path & path)
{
  const std::string data = detail::slurp(path);
  const std::string name = path.filename().string();
  if (data.starts_with("P5")) {
    return decode_pgm(data, name);
  }
  if (data.starts_with("PFG1")) {
    return decode_pfg(data, name);
  }
  throw Error(name + ": unrecognized image format");
}

inline std::string encode_voxels(const VoxelGrid & g)
{
  std::string out = "VOX1";
  detail::put_u16(out, static_cast<std::uint16_t>(g.width()));
  detail::put_u16(out, static_cast<std::uint16_t>(g.height()));
  detail::put_u16(out, static_cast<std::uint16_t>(g.channels()));
  detail::put_u16(out, 0);
  for (double v : g.values()) {
    detail::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline VoxelGrid decode_voxels(std::string_view data, const std::string & name)
{
  detail::ByteReader r(data, name);
  r.expect_magic("VOX1");
  const int width = r.u16();
  const int height = r.u16();
  const int channels = r.u16();
  const std::uint16_t pad = r.u16();
  if (pad != 0) {
    throw Error(name + ": nonzero pad field");
  }
  if (channels < 1) {
    throw Error(name + ": channel count must be positive");
  }
  evblur::detail::check_dims(width, height);
  std::vector<double> values(static_cast<std::size_t>(width) * height * channels);
  for (double & v : values) {
    v = r.f32();
  }
  r.expect_end();
  return VoxelGrid::from_values(width, height, channels, std::move(values));
}

inline void write_voxels(const VoxelGrid & g, const std::filesystem::path & path)
{
  detail::dump(path, encode_voxels(g));
}

inline VoxelGrid read_voxels(const std::filesystem::path & path)
{
  return decode_voxels(detail::slurp(path), path.filename().string());
}

inline void write_threshold_map(const ThresholdMap & m, const std::filesystem::path & path)
{
  Image img = Image::from_values_unclamped(
    m.width(), m.height(), std::vector<double>(m.values().begin(), m.values().end()));
  detail::dump(path, encode_pfg(img));
}

inline ThresholdMap read_threshold_map(const std::filesystem::path & path)
{
  const Image img = read_image(path);
  return ThresholdMap(img.width(), img.height(), img.values());
}
}  // namespace evblur::io

#endif  // EVBLUR_IO_HPP
