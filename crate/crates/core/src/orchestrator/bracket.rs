use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// The selector answered.
    Model,
    /// The selector failed twice; the later design advanced.
    Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketMatch {
    pub round: usize,
    pub index: usize,
    /// Higher iteration index, shown to the selector as design A.
    pub a: u32,
    pub b: u32,
    pub winner: u32,
    pub decided_by: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketRound {
    pub round: usize,
    pub entrants: Vec<u32>,
    pub bye: Option<u32>,
    pub matches: Vec<BracketMatch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bracket {
    pub rounds: Vec<BracketRound>,
    pub winner: u32,
}

impl Bracket {
    pub fn match_count(&self) -> usize {
        self.rounds.iter().map(|r| r.matches.len()).sum()
    }
}

/// Single elimination over iteration indices.
///
/// Each round is seeded by descending index; an odd round gives the bye to
/// its highest index and pairs the rest in order. `play(round, index, a, b)`
/// returns the winner of one match. Returns `None` for an empty field.
pub fn knockout<E>(
    entrants: &[u32],
    mut play: impl FnMut(usize, usize, u32, u32) -> Result<(u32, Decision), E>,
) -> Result<Option<Bracket>, E> {
    let mut field: Vec<u32> = entrants.to_vec();
    field.sort_unstable_by(|a, b| b.cmp(a));
    field.dedup();
    if field.is_empty() {
        return Ok(None);
    }
    let mut rounds = Vec::new();
    while field.len() > 1 {
        let round = rounds.len();
        let (bye, contenders) = if field.len() % 2 == 1 { (Some(field[0]), &field[1..]) } else { (None, &field[..]) };
        let mut matches = Vec::with_capacity(contenders.len() / 2);
        let mut next: Vec<u32> = bye.into_iter().collect();
        for (index, pair) in contenders.chunks(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            let (winner, decided_by) = play(round, index, a, b)?;
            debug_assert!(winner == a || winner == b);
            matches.push(BracketMatch { round, index, a, b, winner, decided_by });
            next.push(winner);
        }
        rounds.push(BracketRound { round, entrants: field.clone(), bye, matches });
        next.sort_unstable_by(|a, b| b.cmp(a));
        field = next;
    }
    Ok(Some(Bracket { rounds, winner: field[0] }))
}
