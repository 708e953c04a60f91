// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "rita/embedder.hpp"
#include "rita/error.hpp"
#include "rita/io.hpp"
#include "rita/wav.hpp"
#include "support.hpp"

using namespace rita;

TEST(WavEmbedding, MatchesFrozenGolden) {
    const auto audio = read_wav(test::data_dir() / "speech_2s.wav");
    ASSERT_EQ(audio.sample_rate, 16000);
    const auto got = embed_wav(audio, EmbedderConfig{});
    const auto want = load_features(test::data_dir() / "speech_2s.expected.features");
    ASSERT_EQ(got.size(), 50u);
    ASSERT_EQ(got.size(), want.size());
    ASSERT_EQ(got.dims(), want.dims());
    for (std::size_t f = 0; f < got.size(); ++f) {
        EXPECT_EQ(got.frames[f].timestamp_ms, want.frames[f].timestamp_ms);
        for (std::size_t d = 0; d < got.dims(); ++d) {
            EXPECT_NEAR(got.frames[f].vector[d], want.frames[f].vector[d], 1e-9) << "frame " << f << " dim " << d;
        }
    }
}

TEST(WavEmbedding, SilenceIsQuietAndBounded) {
    PcmAudio audio;
    audio.samples.assign(16000, 0.0f);
    const auto s = embed_wav(audio, EmbedderConfig{});
    ASSERT_EQ(s.size(), 25u);
    for (const auto& f : s.frames) {
        EXPECT_EQ(f.vector[0], 0.0);
        for (double x : f.vector.values()) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
}

TEST(WavEmbedding, LouderInputRaisesEnergy) {
    auto tone = [](float amp) {
        PcmAudio a;
        for (int i = 0; i < 8000; ++i) a.samples.push_back(amp * std::sin(2.0f * 3.14159265f * 440.0f * i / 16000.0f));
        return a;
    };
    const auto quiet = embed_wav(tone(0.05f), EmbedderConfig{});
    const auto loud = embed_wav(tone(0.2f), EmbedderConfig{});
    EXPECT_LT(quiet.frames[3].vector[0], loud.frames[3].vector[0]);
}

TEST(WavEmbedding, RejectsBadInput) {
    PcmAudio empty;
    EXPECT_THROW(embed_wav(empty, EmbedderConfig{}), Error);
    PcmAudio stereo;
    stereo.samples.assign(32000, 0.0f);
    stereo.channels = 2;
    EXPECT_THROW(embed_wav(stereo, EmbedderConfig{}), Error);
    PcmAudio tiny;
    tiny.samples.assign(10, 0.0f);
    EXPECT_THROW(embed_wav(tiny, EmbedderConfig{}), Error);
}

TEST(WavCodec, EncodeParseRoundTrip) {
    PcmAudio a;
    for (int i = -100; i < 100; ++i) a.samples.push_back(static_cast<float>(i * 300) / 32768.0f);
    const auto back = parse_wav(encode_wav(a));
    EXPECT_EQ(back.sample_rate, a.sample_rate);
    EXPECT_EQ(back.samples, a.samples);
}

TEST(WavCodec, RejectsGarbage) {
    const std::vector<std::uint8_t> junk = {'R', 'I', 'F', 'F', 0, 0};
    EXPECT_THROW(parse_wav(junk), Error);
}

TEST(EmbedderConfig, DefaultDimsUseSpeechBands) {
    const auto c = EmbedderConfig::with_dims(8);
    EXPECT_EQ(c.band_edges_hz, (std::vector<double>{100, 300, 800, 1800, 3500}));
    const auto c12 = EmbedderConfig::with_dims(12);
    EXPECT_EQ(c12.band_edges_hz.size(), 9u);
    EXPECT_DOUBLE_EQ(c12.band_edges_hz.front(), 100.0);
    EXPECT_NEAR(c12.band_edges_hz.back(), 3500.0, 1e-9);
    EXPECT_THROW(EmbedderConfig::with_dims(3).validate(), Error);
}

TEST(TextStub, TwoFramesPerCharacterWithVisemeValues) {
    const auto s = embed_text_stub("ab", EmbedderConfig{});
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(s.source_kind, SourceKind::text_stub);
    EXPECT_EQ(s.frames[0].timestamp_ms, 0);
    EXPECT_EQ(s.frames[3].timestamp_ms, 120);
    // 'a': open 0.9, width 0.6; 'b': closed.
    EXPECT_DOUBLE_EQ(s.frames[0].vector[0], 0.9);
    EXPECT_DOUBLE_EQ(s.frames[1].vector[1], 0.6);
    EXPECT_DOUBLE_EQ(s.frames[2].vector[0], 0.0);
    EXPECT_DOUBLE_EQ(s.frames[0].vector[2], 0.8);
    EXPECT_DOUBLE_EQ(s.frames[0].vector[3], 0.5);
}

TEST(TextStub, BlinksOnSchedule) {
    const auto s = embed_text_stub(std::string(50, 'o'), EmbedderConfig{});
    ASSERT_EQ(s.size(), 100u);
    EXPECT_DOUBLE_EQ(s.frames[72].vector[2], 0.8);
    EXPECT_DOUBLE_EQ(s.frames[73].vector[2], 0.15);
    EXPECT_DOUBLE_EQ(s.frames[74].vector[2], 0.15);
    EXPECT_DOUBLE_EQ(s.frames[75].vector[2], 0.8);
}

TEST(TextStub, DeterministicAndCaseInsensitive) {
    const auto a = embed_text_stub("Hello, World", EmbedderConfig{});
    const auto b = embed_text_stub("hello, world", EmbedderConfig{});
    EXPECT_EQ(a.frames, b.frames);
}

TEST(TextStub, EmptyTextIsAnError) {
    EXPECT_THROW(embed_text_stub("   ", EmbedderConfig{}), Error);
}

TEST(Features, FormatParseRoundTripIsBitExact) {
    const auto rows = test::random_rows(30, 6, 99);
    const auto s = make_stream(rows, 25, SourceKind::file);
    const auto back = parse_features(format_features(s));
    EXPECT_EQ(back.frames, s.frames);
    EXPECT_EQ(back.fps, 25);
}

TEST(Features, SaveLoadRoundTrip) {
    test::TempDir dir;
    const auto s = make_stream(test::random_rows(5, 4, 1), 50, SourceKind::file);
    save_features(s, dir / "f.features");
    EXPECT_EQ(load_features(dir / "f.features").frames, s.frames);
}

TEST(Features, ParseErrorsCarryLineNumbers) {
    const std::string text = "# rita-features v1 N=2 fps=25\n0,0.1,0.2\n40,0.1\n";
    try {
        parse_features(text);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parse);
        EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
    }
}

TEST(Features, RejectsBrokenCadenceAndHeader) {
    EXPECT_THROW(parse_features("# rita-features v1 N=1 fps=25\n0,0.1\n50,0.2\n"), Error);
    EXPECT_THROW(parse_features("0,0.1\n"), Error);
    EXPECT_THROW(parse_features("# rita-features v1 N=1 fps=25\n0,abc\n"), Error);
}

TEST(Features, IntervalRounding) {
    EXPECT_EQ(frame_interval_ms(25), 40);
    EXPECT_EQ(frame_interval_ms(30), 33);
    EXPECT_EQ(frame_interval_ms(12.5), 80);
}
