//! Per-period trade blocks chained by SHA-256 with a small proof-of-work.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::{Result, SimError};
use crate::market::Trade;

pub const MAX_DIFFICULTY: u32 = 24;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn leading_zero_bits(&self) -> u32 {
        let mut bits = 0;
        for byte in self.0 {
            if byte == 0 {
                bits += 8;
            } else {
                bits += byte.leading_zeros();
                break;
            }
        }
        bits
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("digest must be 32 bytes"))?;
        Ok(Digest(arr))
    }
}

/// Required number of leading zero bits in a block hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Difficulty(u32);

impl Difficulty {
    pub fn new(bits: u32) -> Result<Self> {
        if bits > MAX_DIFFICULTY {
            return Err(SimError::config(
                "ledger_difficulty",
                format!("at most {MAX_DIFFICULTY} bits, got {bits}"),
            ));
        }
        Ok(Difficulty(bits))
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl Default for Difficulty {
    fn default() -> Self {
        Difficulty(8)
    }
}

impl TryFrom<u32> for Difficulty {
    type Error = SimError;
    fn try_from(bits: u32) -> Result<Self> {
        Difficulty::new(bits)
    }
}

impl From<Difficulty> for u32 {
    fn from(d: Difficulty) -> u32 {
        d.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub period: u64,
    pub previous_hash: Digest,
    pub trade_digest: Digest,
    pub nonce: u64,
    pub block_hash: Digest,
    pub trades: Vec<Trade>,
}

/// One canonical line per trade: every field, decimals at fixed precision.
fn canonical_line(t: &Trade) -> String {
    let f = &t.fees;
    format!(
        "{}|{}|{}|{}|{:.6}|{}|{:.6}|{:.6}|{:.6}|{:.6}|{:.6}|{:.6}|{:.6}|{:.6}|{:.6}",
        t.period,
        t.stage,
        t.buyer,
        t.seller,
        t.price,
        t.quantity.micro_kwh(),
        t.loss,
        f.congestion,
        f.transmission,
        f.imbalance,
        f.voltage,
        f.thermal,
        f.zone,
        f.total,
        f.balance_impact
    )
}

pub fn canonical_trades(trades: &[Trade]) -> Vec<String> {
    let mut keyed: Vec<_> = trades
        .iter()
        .map(|t| ((t.stage, t.buyer.sort_key(), t.seller.sort_key()), canonical_line(t)))
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, line)| line).collect()
}

/// Merkle root over the canonical trade lines; the empty set hashes the empty string.
pub fn trade_digest(trades: &[Trade]) -> Digest {
    let mut level: Vec<Digest> = canonical_trades(trades)
        .iter()
        .map(|line| Digest::of(line.as_bytes()))
        .collect();
    if level.is_empty() {
        return Digest::of(b"");
    }
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                let mut buf = [0u8; 64];
                buf[..32].copy_from_slice(&pair[0].0);
                buf[32..].copy_from_slice(&right.0);
                Digest::of(&buf)
            })
            .collect();
    }
    level[0]
}

pub fn block_hash(index: u64, period: u64, previous: &Digest, digest: &Digest, nonce: u64) -> Digest {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    h.update(period.to_le_bytes());
    h.update(previous.0);
    h.update(digest.0);
    h.update(nonce.to_le_bytes());
    Digest(h.finalize().into())
}

/// Seals a block, searching nonces upward from zero.
pub fn seal_block(index: u64, period: u64, trades: Vec<Trade>, previous_hash: Digest, difficulty: Difficulty) -> Block {
    let digest = trade_digest(&trades);
    let mut nonce = 0u64;
    loop {
        let hash = block_hash(index, period, &previous_hash, &digest, nonce);
        if hash.leading_zero_bits() >= difficulty.bits() {
            return Block {
                index,
                period,
                previous_hash,
                trade_digest: digest,
                nonce,
                block_hash: hash,
                trades,
            };
        }
        nonce += 1;
    }
}

pub fn verify_chain(blocks: &[Block], difficulty: Difficulty) -> bool {
    let mut previous = Digest::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        if b.index != i as u64 || b.previous_hash != previous {
            return false;
        }
        if b.trade_digest != trade_digest(&b.trades) {
            return false;
        }
        let hash = block_hash(b.index, b.period, &b.previous_hash, &b.trade_digest, b.nonce);
        if hash != b.block_hash || hash.leading_zero_bits() < difficulty.bits() {
            return false;
        }
        previous = b.block_hash;
    }
    true
}

/// Append-only chain starting from an empty genesis block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    difficulty: Difficulty,
    blocks: Vec<Block>,
}

impl Ledger {
    pub fn new(difficulty: Difficulty) -> Self {
        let genesis = seal_block(0, 0, Vec::new(), Digest::ZERO, difficulty);
        Ledger {
            difficulty,
            blocks: vec![genesis],
        }
    }

    pub fn append(&mut self, period: u64, trades: Vec<Trade>) -> &Block {
        let tip = self.tip().block_hash;
        let block = seal_block(self.blocks.len() as u64, period, trades, tip, self.difficulty);
        self.blocks.push(block);
        self.blocks.last().unwrap()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always has a genesis block")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    pub fn verify(&self) -> bool {
        verify_chain(&self.blocks, self.difficulty)
    }
}

pub fn write_ndjson<W: Write>(blocks: &[Block], mut out: W) -> std::io::Result<()> {
    for b in blocks {
        serde_json::to_writer(&mut out, b)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| SimError::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let block = serde_json::from_str(&line).map_err(|e| SimError::Parse(format!("ledger line {}: {e}", n + 1)))?;
        blocks.push(block);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{FeeBreakdown, Party, Stage};
    use crate::units::Quantity;

    fn trade(buyer: usize, seller: usize, price: f64) -> Trade {
        Trade {
            period: 3,
            stage: Stage::Auction,
            buyer: Party::Agent(buyer),
            seller: Party::Agent(seller),
            price,
            quantity: Quantity::from_kwh(4.5),
            loss: 0.01,
            fees: FeeBreakdown::default(),
        }
    }

    #[test]
    fn zero_difficulty_takes_first_nonce() {
        let b = seal_block(0, 0, vec![], Digest::ZERO, Difficulty::new(0).unwrap());
        assert_eq!(b.nonce, 0);
        assert_eq!(b.trade_digest, Digest::of(b""));
    }

    #[test]
    fn difficulty_is_met_and_deterministic() {
        let d = Difficulty::default();
        let a = seal_block(1, 3, vec![trade(0, 1, 150.0)], Digest::ZERO, d);
        let b = seal_block(1, 3, vec![trade(0, 1, 150.0)], Digest::ZERO, d);
        assert!(a.block_hash.leading_zero_bits() >= 8);
        assert_eq!(a, b);
    }

    #[test]
    fn digest_ignores_input_order() {
        let x = vec![trade(0, 1, 150.0), trade(2, 3, 120.0)];
        let y = vec![trade(2, 3, 120.0), trade(0, 1, 150.0)];
        assert_eq!(trade_digest(&x), trade_digest(&y));
    }

    #[test]
    fn difficulty_upper_bound() {
        assert!(Difficulty::new(24).is_ok());
        assert!(Difficulty::new(25).is_err());
        assert!(serde_json::from_str::<Difficulty>("30").is_err());
    }

    #[test]
    fn leading_zero_bits() {
        let mut d = Digest::ZERO;
        assert_eq!(d.leading_zero_bits(), 256);
        d.0[1] = 0b0001_0000;
        assert_eq!(d.leading_zero_bits(), 11);
    }

    #[test]
    fn tampering_is_detected() {
        let mut ledger = Ledger::new(Difficulty::new(4).unwrap());
        for t in 0..5 {
            ledger.append(t, vec![trade(0, 1, 100.0 + t as f64)]);
        }
        assert!(ledger.verify());
        let d = ledger.difficulty();
        let mut blocks = ledger.blocks().to_vec();
        blocks[2].trades[0].price += 0.01;
        assert!(!verify_chain(&blocks, d));
        let mut blocks = ledger.blocks().to_vec();
        blocks[3].period += 1;
        assert!(!verify_chain(&blocks, d));
        let mut blocks = ledger.blocks().to_vec();
        blocks.remove(1);
        assert!(!verify_chain(&blocks, d));
        assert!(verify_chain(&[], d));
    }

    #[test]
    fn ndjson_round_trip() {
        let mut ledger = Ledger::new(Difficulty::new(2).unwrap());
        ledger.append(0, vec![trade(0, 1, 150.0)]);
        let mut buf = Vec::new();
        write_ndjson(ledger.blocks(), &mut buf).unwrap();
        let back = read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, ledger.blocks());
        assert!(verify_chain(&back, ledger.difficulty()));
    }
}
