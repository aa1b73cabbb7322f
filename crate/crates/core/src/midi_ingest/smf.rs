//! Standard MIDI File reader (formats 0 and 1) and a minimal format-0 writer.
//!
//! Only note-on, note-off and set-tempo events are consumed; every other
//! message is parsed for framing and then dropped.

use super::{IngestError, NoteEvent, Score, DEFAULT_TEMPO_US};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RawKind {
    // Ordering matters: at equal ticks, offs sort before ons so legato
    // notes that touch are not mistaken for overlaps.
    Tempo(u32),
    NoteOff(u8),
    NoteOn(u8, u8),
}

impl RawKind {
    fn rank(&self) -> u8 {
        match self {
            RawKind::Tempo(_) => 0,
            RawKind::NoteOff(_) => 1,
            RawKind::NoteOn(..) => 2,
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedFile(msg.into())
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], IngestError> {
        if self.remaining() < n {
            return Err(malformed("unexpected end of data"));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IngestError> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IngestError> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32, IngestError> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(malformed("variable-length quantity longer than 4 bytes"))
    }
}

/// Parses SMF bytes into a validated monophonic [`Score`].
pub fn parse_midi(bytes: &[u8]) -> Result<Score, IngestError> {
    let mut r = Reader::new(bytes);
    if r.bytes(4).map_err(|_| malformed("missing MThd header"))? != b"MThd" {
        return Err(malformed("missing MThd header"));
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(malformed(format!("header length {header_len} < 6")));
    }
    let header = r.bytes(header_len)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        2 => return Err(IngestError::UnsupportedFormat("SMF format 2".into())),
        other => return Err(malformed(format!("unknown SMF format {other}"))),
    }
    if division & 0x8000 != 0 {
        return Err(IngestError::UnsupportedFormat(
            "SMPTE time division".into(),
        ));
    }
    if division == 0 {
        return Err(malformed("zero ticks per quarter note"));
    }
    if format == 0 && ntracks != 1 {
        return Err(malformed(format!("format 0 file declares {ntracks} tracks")));
    }

    let mut raw: Vec<(u64, usize, RawKind)> = Vec::new();
    let mut tracks_read = 0u16;
    while tracks_read < ntracks {
        if r.remaining() == 0 {
            return Err(malformed(format!(
                "expected {ntracks} tracks, found {tracks_read}"
            )));
        }
        let id = r.bytes(4)?;
        let len = r.u32()? as usize;
        let body = r
            .bytes(len)
            .map_err(|_| malformed("chunk length exceeds file size"))?;
        if id == b"MTrk" {
            read_track(body, &mut raw)?;
            tracks_read += 1;
        }
    }

    raw.sort_by_key(|&(tick, seq, kind)| (tick, kind.rank(), seq));

    let mut tempo_map: Vec<(u64, u32)> = raw
        .iter()
        .filter_map(|&(tick, _, kind)| match kind {
            RawKind::Tempo(us) => Some((tick, us)),
            _ => None,
        })
        .collect();
    if tempo_map.first().is_none_or(|&(tick, _)| tick > 0) {
        tempo_map.insert(0, (0, DEFAULT_TEMPO_US));
    }
    let to_ms = |tick: u64| ticks_to_ms(tick, division, &tempo_map);

    let mut events = Vec::new();
    let mut held: Option<(u8, u64, u8)> = None;
    for &(tick, _, kind) in &raw {
        match kind {
            RawKind::NoteOn(note, velocity) => {
                if let Some((h, _, _)) = held {
                    return Err(IngestError::Polyphony {
                        index: events.len() + 1,
                        held: h,
                        note,
                    });
                }
                held = Some((note, tick, velocity));
            }
            RawKind::NoteOff(note) => {
                if let Some((h, start, velocity)) = held {
                    if h == note {
                        let onset_ms = to_ms(start);
                        events.push(NoteEvent {
                            midi_note: note,
                            onset_ms,
                            duration_ms: to_ms(tick) - onset_ms,
                            velocity,
                        });
                        held = None;
                    }
                }
            }
            RawKind::Tempo(_) => {}
        }
    }
    if let Some((note, _, _)) = held {
        return Err(malformed(format!("note {note} has no note-off")));
    }
    Score::new(events, division, tempo_map)
}

fn read_track(body: &[u8], out: &mut Vec<(u64, usize, RawKind)>) -> Result<(), IngestError> {
    let mut r = Reader::new(body);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while r.remaining() > 0 {
        tick += u64::from(r.vlq()?);
        let mut status = r.u8()?;
        let first_data = if status < 0x80 {
            let s = running.ok_or_else(|| malformed("running status without a prior status byte"))?;
            let d = status;
            status = s;
            Some(d)
        } else {
            None
        };
        match status {
            0x80..=0xef => {
                running = Some(status);
                let d1 = match first_data {
                    Some(d) => d,
                    None => r.u8()?,
                };
                let kind = status & 0xf0;
                let d2 = if matches!(kind, 0xc0 | 0xd0) {
                    0
                } else {
                    r.u8()?
                };
                if d1 > 0x7f || d2 > 0x7f {
                    return Err(malformed("data byte with high bit set"));
                }
                let seq = out.len();
                match kind {
                    0x90 if d2 > 0 => out.push((tick, seq, RawKind::NoteOn(d1, d2))),
                    0x90 | 0x80 => out.push((tick, seq, RawKind::NoteOff(d1))),
                    _ => {}
                }
            }
            0xff => {
                running = None;
                let meta = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.bytes(len)?;
                match meta {
                    0x51 => {
                        if len != 3 {
                            return Err(malformed("set-tempo event length is not 3"));
                        }
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return Err(malformed("zero tempo"));
                        }
                        out.push((tick, out.len(), RawKind::Tempo(us)));
                    }
                    0x2f => return Ok(()),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.bytes(len)?;
            }
            other => return Err(malformed(format!("unexpected status byte {other:#04x}"))),
        }
    }
    Ok(())
}

fn ticks_to_ms(tick: u64, tpq: u16, tempo_map: &[(u64, u32)]) -> f64 {
    let mut ms = 0.0;
    let mut last_tick = 0u64;
    let mut tempo = DEFAULT_TEMPO_US;
    for &(t, us) in tempo_map {
        if t >= tick {
            break;
        }
        ms += (t - last_tick) as f64 * f64::from(tempo) / 1000.0 / f64::from(tpq);
        last_tick = t;
        tempo = us;
    }
    ms + (tick - last_tick) as f64 * f64::from(tempo) / 1000.0 / f64::from(tpq)
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

/// Encodes a score as a format-0 SMF with a single tempo.
///
/// Times are rounded to the nearest tick.
pub fn encode_smf(score: &Score, ticks_per_quarter: u16, us_per_quarter: u32) -> Vec<u8> {
    let ticks_per_ms = f64::from(ticks_per_quarter) * 1000.0 / f64::from(us_per_quarter);
    let to_tick = |ms: f64| (ms * ticks_per_ms).round() as u64;

    let mut track = Vec::new();
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&us_per_quarter.to_be_bytes()[1..]);
    let mut now = 0u64;
    for ev in score.events() {
        let on = to_tick(ev.onset_ms);
        let off = to_tick(ev.end_ms());
        push_vlq(&mut track, (on - now) as u32);
        track.extend_from_slice(&[0x90, ev.midi_note, ev.velocity.max(1)]);
        push_vlq(&mut track, (off - on) as u32);
        track.extend_from_slice(&[0x80, ev.midi_note, 0]);
        now = off;
    }
    push_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&ticks_per_quarter.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
