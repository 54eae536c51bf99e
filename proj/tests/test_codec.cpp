#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uapq/codec.hpp"
#include "uapq/synthetic.hpp"

using namespace uapq;

namespace {

double mean_psnr(const VideoFrames& a, const VideoFrames& b, double cap = 99.0) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) acc += psnr(a.frames[i], b.frames[i], cap);
  return acc / static_cast<double>(a.frames.size());
}

VideoFrames grey_video(double v, std::size_t frames = 2) {
  return VideoFrames(std::vector<ImageTensor>(frames, ImageTensor(Shape{16, 24, 3}, v)), 25.0);
}

}  // namespace

TEST(MockCodec, StepEndpoints) {
  EXPECT_DOUBLE_EQ(mock_quant_step(1.0), 1.0 / 255.0);
  EXPECT_DOUBLE_EQ(mock_quant_step(0.0), 0.25);
  EXPECT_THROW(mock_encode_decode(grey_video(0.5), 0.0), ParameterError);
  EXPECT_THROW(mock_encode_decode(grey_video(0.5), 1.5), ParameterError);
}

TEST(MockCodec, HighestQualityIsNearLossless) {
  const auto v = synthetic::video(3);
  const auto r = mock_encode_decode(v, 1.0);
  EXPECT_GE(mean_psnr(v, r.video), 45.0);
  EXPECT_EQ(r.video.frames.size(), v.frames.size());
  EXPECT_EQ(r.video.shape(), v.shape());
}

TEST(MockCodec, BitrateAndQualityMonotoneInQ) {
  const auto v = synthetic::video(11);
  double last_rate = 0.0, last_psnr = 0.0;
  for (double q : {0.2, 0.4, 0.6, 0.8}) {
    const auto r = mock_encode_decode(v, q);
    const double p = mean_psnr(v, r.video);
    EXPECT_GT(r.measured_bitrate, last_rate) << q;
    EXPECT_GT(p, last_psnr) << q;
    last_rate = r.measured_bitrate;
    last_psnr = p;
  }
}

TEST(MockCodec, MidGreyIsExactOnDcGrid) {
  // DC of a flat 0.5 block is 4.0, a multiple of both 1/255 and 0.125.
  const double q_eighth = 0.125 / (0.25 - 1.0 / 255.0);
  EXPECT_NEAR(mock_quant_step(q_eighth), 0.125, 1e-15);
  const auto v = grey_video(0.5);
  for (double q : {1.0, q_eighth}) EXPECT_EQ(mean_psnr(v, mock_encode_decode(v, q).video), 99.0) << q;
}

TEST(MockCodec, Deterministic) {
  const auto v = synthetic::video(5, 3, 40, 36);
  const auto a = mock_encode_decode(v, 0.5), b = mock_encode_decode(v, 0.5);
  EXPECT_EQ(a.measured_bitrate, b.measured_bitrate);
  for (std::size_t i = 0; i < a.video.frames.size(); ++i) EXPECT_EQ(a.video.frames[i], b.video.frames[i]);
  EXPECT_EQ(a.codec_echo, b.codec_echo);
}

TEST(MockCodec, NonMultipleOfEightEdges) {
  const auto v = synthetic::video(6, 2, 13, 21);
  const auto r = mock_encode_decode(v, 0.9);
  EXPECT_EQ(r.video.shape(), v.shape());
  EXPECT_GT(mean_psnr(v, r.video), 30.0);
}

TEST(ExternalCodec, IdentityTemplateMatchesY4mRoundTrip) {
  const auto v = synthetic::video(7, 3, 16, 16);
  auto spec = CodecSpec::external("cp {input} {output} && true {bitrate}", 500000);
  spec.container_ext = "y4m";
  const auto r = encode_decode(v, spec);
  const auto bytes = io::encode_y4m(v);
  const auto direct = io::decode_y4m(bytes);
  ASSERT_EQ(r.video.frames.size(), direct.frames.size());
  for (std::size_t i = 0; i < direct.frames.size(); ++i) EXPECT_EQ(r.video.frames[i], direct.frames[i]);
  EXPECT_NEAR(r.measured_bitrate, static_cast<double>(bytes.size()) * 8.0 / v.duration(), 1e-9);
  EXPECT_EQ(r.codec_echo, "cp {input} {output} && true 500000");
}

TEST(ExternalCodec, TemplateValidation) {
  EXPECT_THROW(CodecSpec::external("cp {input} {output}", 1000).validate(), ParameterError);
  EXPECT_THROW(CodecSpec::external("enc {input} {output} {bitrate}", 1000, "dec {input}").validate(), ParameterError);
  EXPECT_THROW(CodecSpec::external("enc {input} {output} {bitrate}", 0).validate(), ParameterError);
  EXPECT_NO_THROW(CodecSpec::external("enc {input} {output} {bitrate}", 1000).validate());
}

TEST(ExternalCodec, FailingEncoderCarriesDiagnostics) {
  const auto v = synthetic::video(8, 1, 8, 8);
  try {
    encode_decode(v, CodecSpec::external("echo broken-encoder {bitrate} >&2; false {input} {output}", 1000));
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_NE(std::string(e.what()).find("status 1"), std::string::npos);
    EXPECT_NE(e.diagnostics().find("broken-encoder 1000"), std::string::npos);
  }
}

TEST(ExternalCodec, FailingDecoderAndBadOutput) {
  const auto v = synthetic::video(9, 1, 8, 8);
  EXPECT_THROW(encode_decode(v, CodecSpec::external("cp {input} {output} #{bitrate}", 1000, "false {input} {output}")),
               CodecError);
  EXPECT_THROW(encode_decode(v, CodecSpec::external("true {input} {output} {bitrate}", 1000)), CodecError);
  EXPECT_THROW(
      encode_decode(v, CodecSpec::external("cp {input} {output} #{bitrate}", 1000, "echo junk > {output} #{input}")),
      CodecError);
}

TEST(ExternalCodec, FrameCountMismatch) {
  const auto v = synthetic::video(10, 2, 8, 8);
  // Decoder output holds a single frame.
  const auto one = io::encode_y4m(synthetic::video(10, 1, 8, 8));
  const auto dir = oracle::temp_dir("codec");
  const auto one_path = dir / "one.y4m";
  std::ofstream(one_path, std::ios::binary).write(reinterpret_cast<const char*>(one.data()),
                                                  static_cast<std::streamsize>(one.size()));
  try {
    encode_decode(v, CodecSpec::external("cp {input} {output} #{bitrate}", 1000,
                                         "cp " + one_path.string() + " {output} #{input}"));
    FAIL();
  } catch (const CodecError& e) {
    EXPECT_NE(std::string(e.what()).find("1 frames"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
