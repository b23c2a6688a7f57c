//! Two-agent simultaneous-move gridworld.
//!
//! The layout follows the classic frozen-lake board, except that holes are
//! impassable obstacles and there is no goal cell: an episode simply runs for
//! a fixed number of steps.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPISODE_LENGTH: usize = 128;

/// Cell codes used by [`StateEncoding`].
pub const CODE_FREE: u8 = 0;
pub const CODE_OBSTACLE: u8 = 1;
pub const CODE_AGENT: u8 = 2;
pub const CODE_OPPONENT: u8 = 3;
pub const NUM_CODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Pos { row, col }
    }
}

impl From<(usize, usize)> for Pos {
    fn from((row, col): (usize, usize)) -> Self {
        Pos { row, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Right, Action::Up, Action::Down];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// `(d_row, d_col)` unit displacement.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
        }
    }

    pub fn from_delta(delta: (isize, isize)) -> Option<Action> {
        Self::ALL.into_iter().find(|a| a.delta() == delta)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Up => "UP",
            Action::Down => "DOWN",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Static board: dimensions plus obstacle cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridMap {
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
}

impl GridMap {
    /// Builds a map and checks that obstacles are in bounds, that at least two
    /// cells are free, and that the free cells form one 4-connected region.
    pub fn new(width: usize, height: usize, obstacles: impl IntoIterator<Item = Pos>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!("map dimensions must be positive, got {width}x{height}")));
        }
        if width > u8::MAX as usize || height > u8::MAX as usize {
            return Err(Error::Config(format!("map dimensions must be at most 255, got {width}x{height}")));
        }
        let mut cells = vec![false; width * height];
        for p in obstacles {
            if p.row >= height || p.col >= width {
                return Err(Error::Config(format!("obstacle {p} lies outside a {width}x{height} map")));
            }
            cells[p.row * width + p.col] = true;
        }
        let map = GridMap {
            width,
            height,
            obstacles: cells,
        };
        let free = map.free_cells();
        if free.len() < 2 {
            return Err(Error::Config(format!("map needs at least 2 free cells, has {}", free.len())));
        }
        if map.reachable_from(free[0]) != free.len() {
            return Err(Error::Config("free cells of the map are not 4-connected".into()));
        }
        Ok(map)
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, [])
    }

    /// 4x4 board with an L-shaped block in the centre.
    pub fn default_map() -> Self {
        Self::new(4, 4, [Pos::new(1, 1), Pos::new(1, 2), Pos::new(2, 2)]).expect("default map is valid")
    }

    /// Parses the map text format: one line per row, `.` free and `#` obstacle.
    /// Blank lines and trailing whitespace are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        if rows.is_empty() {
            return Err(Error::Config("map text has no rows".into()));
        }
        let width = rows[0].chars().count();
        let mut obstacles = Vec::new();
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::Config(format!(
                    "map row {} has length {}, expected {width}",
                    r + 1,
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => obstacles.push(Pos::new(r, c)),
                    other => {
                        return Err(Error::Config(format!(
                            "map row {} column {}: unexpected character {other:?}",
                            r + 1,
                            c + 1
                        )))
                    }
                }
            }
        }
        Self::new(width, rows.len(), obstacles)
    }

    /// Inverse of [`GridMap::parse`]; rows are joined with `\n`.
    pub fn to_text(&self) -> String {
        (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| if self.is_obstacle(Pos::new(r, c)) { '#' } else { '.' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row < self.height && p.col < self.width
    }

    pub fn is_obstacle(&self, p: Pos) -> bool {
        self.obstacles[p.row * self.width + p.col]
    }

    pub fn is_free(&self, p: Pos) -> bool {
        self.in_bounds(p) && !self.is_obstacle(p)
    }

    pub fn obstacles(&self) -> Vec<Pos> {
        self.cells().filter(|p| self.is_obstacle(*p)).collect()
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<Pos> {
        self.cells().filter(|p| !self.is_obstacle(*p)).collect()
    }

    fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |r| (0..self.width).map(move |c| Pos::new(r, c)))
    }

    fn reachable_from(&self, start: Pos) -> usize {
        let mut seen = vec![false; self.cell_count()];
        let mut queue = VecDeque::from([start]);
        seen[start.row * self.width + start.col] = true;
        let mut count = 0;
        while let Some(p) = queue.pop_front() {
            count += 1;
            for a in Action::ALL {
                let q = apply_move(self, p, a);
                let idx = q.row * self.width + q.col;
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(q);
                }
            }
        }
        count
    }
}

impl Default for GridMap {
    fn default() -> Self {
        Self::default_map()
    }
}

/// Moves one cell in the action's direction; moves into walls or obstacles
/// leave the position unchanged.
pub fn apply_move(map: &GridMap, pos: Pos, action: Action) -> Pos {
    let (dr, dc) = action.delta();
    let (Some(row), Some(col)) = (pos.row.checked_add_signed(dr), pos.col.checked_add_signed(dc)) else {
        return pos;
    };
    let next = Pos::new(row, col);
    if map.is_free(next) {
        next
    } else {
        pos
    }
}

/// Immutable world state. Stepping returns a new value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    map: Arc<GridMap>,
    agent: Pos,
    opponent: Pos,
    step_index: usize,
    episode_length: usize,
}

impl GridState {
    /// Places agent and opponent on two distinct free cells drawn uniformly.
    pub fn reset<R: Rng + ?Sized>(map: Arc<GridMap>, episode_length: usize, rng: &mut R) -> Result<Self> {
        let free = map.free_cells();
        if free.len() < 2 {
            return Err(Error::Config(format!("map needs at least 2 free cells, has {}", free.len())));
        }
        let a = rng.random_range(0..free.len());
        let mut o = rng.random_range(0..free.len() - 1);
        if o >= a {
            o += 1;
        }
        Ok(GridState {
            agent: free[a],
            opponent: free[o],
            map,
            step_index: 0,
            episode_length,
        })
    }

    /// Builds a state at an explicit placement; positions must be free and distinct.
    pub fn with_positions(map: Arc<GridMap>, agent: Pos, opponent: Pos, episode_length: usize) -> Result<Self> {
        for (who, p) in [("agent", agent), ("opponent", opponent)] {
            if !map.is_free(p) {
                return Err(Error::Config(format!("{who} position {p} is not a free cell")));
            }
        }
        if agent == opponent {
            return Err(Error::Config(format!("agent and opponent share cell {agent}")));
        }
        Ok(GridState {
            map,
            agent,
            opponent,
            step_index: 0,
            episode_length,
        })
    }

    pub fn map(&self) -> &Arc<GridMap> {
        &self.map
    }

    pub fn agent(&self) -> Pos {
        self.agent
    }

    pub fn opponent(&self) -> Pos {
        self.opponent
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    pub fn is_done(&self) -> bool {
        self.step_index >= self.episode_length
    }

    /// Simultaneous move. Both destinations are computed from the pre-step
    /// state; if they coincide the opponent stays put. Swaps are allowed.
    pub fn step(&self, agent_action: Action, opponent_action: Action) -> Result<GridState> {
        if self.is_done() {
            return Err(Error::Sequencing(format!(
                "episode already finished after {} steps",
                self.episode_length
            )));
        }
        let (agent, opponent) = resolve_moves(&self.map, self.agent, agent_action, self.opponent, opponent_action);
        Ok(GridState {
            map: Arc::clone(&self.map),
            agent,
            opponent,
            step_index: self.step_index + 1,
            episode_length: self.episode_length,
        })
    }

    pub fn encode(&self) -> StateEncoding {
        let mut cells: Vec<u8> = self
            .map
            .obstacles
            .iter()
            .map(|&o| if o { CODE_OBSTACLE } else { CODE_FREE })
            .collect();
        let w = self.map.width;
        cells[self.agent.row * w + self.agent.col] = CODE_AGENT;
        cells[self.opponent.row * w + self.opponent.col] = CODE_OPPONENT;
        StateEncoding {
            width: w,
            height: self.map.height,
            cells,
        }
    }

    /// Text frame: `.` free, `#` obstacle, `A` agent, `O` opponent.
    pub fn render(&self) -> String {
        self.encode().render()
    }
}

/// Resolves one simultaneous move and returns `(agent, opponent)`.
///
/// Tentative destinations come from [`apply_move`] on the pre-step state.
/// When both land on the same cell the opponent stays where it was. If the
/// opponent cannot move and the agent tries to enter its cell, the agent is
/// blocked as well.
pub fn resolve_moves(map: &GridMap, agent: Pos, agent_action: Action, opponent: Pos, opponent_action: Action) -> (Pos, Pos) {
    let agent_target = apply_move(map, agent, agent_action);
    let opp_target = apply_move(map, opponent, opponent_action);
    if opp_target != agent_target {
        (agent_target, opp_target)
    } else if opp_target == opponent {
        (agent, opponent)
    } else {
        (agent_target, opponent)
    }
}

/// Row-major matrix of cell codes, the observation both learners see.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateEncoding {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl StateEncoding {
    /// Validates a raw code matrix: codes in 0..=3, exactly one agent and one opponent.
    pub fn from_cells(width: usize, height: usize, cells: Vec<u8>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::Dimension(format!(
                "encoding has {} cells, expected {}x{}",
                cells.len(),
                width,
                height
            )));
        }
        if let Some(bad) = cells.iter().find(|&&c| c as usize >= NUM_CODES) {
            return Err(Error::format("state encoding", format!("invalid cell code {bad}")));
        }
        let agents = cells.iter().filter(|&&c| c == CODE_AGENT).count();
        let opponents = cells.iter().filter(|&&c| c == CODE_OPPONENT).count();
        if agents != 1 || opponents != 1 {
            return Err(Error::format(
                "state encoding",
                format!("expected one agent and one opponent, found {agents} and {opponents}"),
            ));
        }
        Ok(StateEncoding { width, height, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, p: Pos) -> u8 {
        self.cells[p.row * self.width + p.col]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.cells.chunks(self.width).map(<[u8]>::to_vec).collect()
    }

    fn find(&self, code: u8) -> Pos {
        let idx = self.cells.iter().position(|&c| c == code).expect("validated encoding");
        Pos::new(idx / self.width, idx % self.width)
    }

    pub fn agent(&self) -> Pos {
        self.find(CODE_AGENT)
    }

    pub fn opponent(&self) -> Pos {
        self.find(CODE_OPPONENT)
    }

    /// Recovers the map and both positions.
    pub fn decode(&self) -> Result<(GridMap, Pos, Pos)> {
        let obstacles = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == CODE_OBSTACLE)
            .map(|(i, _)| Pos::new(i / self.width, i % self.width));
        let map = GridMap::new(self.width, self.height, obstacles)?;
        Ok((map, self.agent(), self.opponent()))
    }

    pub fn render(&self) -> String {
        self.cells
            .chunks(self.width)
            .map(|row| {
                row.iter()
                    .map(|&c| match c {
                        CODE_OBSTACLE => '#',
                        CODE_AGENT => 'A',
                        CODE_OPPONENT => 'O',
                        _ => '.',
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}
