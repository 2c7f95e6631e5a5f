//! Layered settings: flags and environment (via clap), then `idfra.toml`,
//! then defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use idfra::gateway::{Backend, Gateway, LiveConfig, ReplayStore, RetryPolicy, DEFAULT_API_KEY_ENV};
use idfra::orchestrator::stub::StubDesigner;
use idfra::orchestrator::{RunConfig, Temperatures};
use idfra::render::CameraSpec;
use idfra::sim::SimParams;
use idfra::validate::WorkspaceConfig;

use crate::{BackendKind, GlobalArgs};

pub const DEFAULT_CONFIG: &str = "idfra.toml";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LiveSection {
    base_url: Option<String>,
    api_key_env: Option<String>,
    retry: Option<RetryPolicy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    backend: Option<BackendKind>,
    replay: Option<PathBuf>,
    seed: Option<u64>,
    iterations: Option<u32>,
    runs_root: Option<PathBuf>,
    prompt_dir: Option<PathBuf>,
    pool: Option<PathBuf>,
    model: Option<String>,
    max_tokens: Option<u32>,
    max_frames: Option<usize>,
    live: LiveSection,
    temperatures: Option<Temperatures>,
    sim: Option<SimParams>,
    workspace: Option<WorkspaceConfig>,
    camera: Option<CameraSpec>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub backend: BackendKind,
    pub replay: Option<PathBuf>,
    pub stub_all_missing: bool,
    pub seed: u64,
    pub iterations: Option<u32>,
    pub runs_root: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
    pub max_frames: Option<usize>,
    pub live: LiveConfig,
    pub temperatures: Temperatures,
    pub sim: SimParams,
    pub workspace: WorkspaceConfig,
    pub camera: CameraSpec,
}

fn read_file(global: &GlobalArgs) -> Result<FileConfig> {
    let path = match &global.config {
        Some(p) => p.clone(),
        None if Path::new(DEFAULT_CONFIG).is_file() => PathBuf::from(DEFAULT_CONFIG),
        None => return Ok(FileConfig::default()),
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn resolve(global: &GlobalArgs) -> Result<Settings> {
    let file = read_file(global)?;
    let replay = global.replay.clone().or(file.replay);
    let backend = global
        .backend
        .or(global.replay.as_ref().map(|_| BackendKind::Replay))
        .or(file.backend)
        .unwrap_or(BackendKind::Live);
    let mut live = LiveConfig::new(
        global.base_url.clone().or(file.live.base_url).unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
        "",
    );
    live.api_key_env = global.api_key_env.clone().or(file.live.api_key_env).unwrap_or_else(|| DEFAULT_API_KEY_ENV.to_string());
    if let Some(r) = file.live.retry {
        live.retry = r;
    }
    Ok(Settings {
        backend,
        replay,
        stub_all_missing: global.stub_all_missing,
        seed: global.seed.or(file.seed).unwrap_or(0),
        iterations: file.iterations,
        runs_root: global.runs_root.clone().or(file.runs_root),
        prompt_dir: global.prompts.clone().or(file.prompt_dir),
        pool: file.pool,
        model: global.model.clone().or(file.model),
        max_tokens: file.max_tokens,
        max_frames: file.max_frames,
        live,
        temperatures: file.temperatures.unwrap_or_default(),
        sim: file.sim.unwrap_or_default(),
        workspace: file.workspace.unwrap_or_default(),
        camera: file.camera.unwrap_or_default(),
    })
}

impl Settings {
    pub fn run_config(&self, target: &str, inventory: &Path, iterations: Option<u32>, run_id: Option<String>) -> Result<RunConfig> {
        let mut cfg = RunConfig::new(target, inventory);
        if let Some(i) = iterations.or(self.iterations) {
            cfg.iterations = i;
        }
        cfg.seed = self.seed;
        cfg.temperatures = self.temperatures.clone();
        cfg.prompt_dir = self.prompt_dir.clone();
        if let Some(m) = &self.model {
            cfg.model_id = m.clone();
        }
        if let Some(t) = self.max_tokens {
            cfg.max_tokens = t;
        }
        if let Some(f) = self.max_frames {
            cfg.max_frames = f;
        }
        cfg.workspace = self.workspace.clone();
        cfg.sim = self.sim.clone();
        cfg.camera = self.camera.clone();
        if let Some(r) = &self.runs_root {
            cfg.runs_root = r.clone();
        }
        cfg.run_id = run_id;
        cfg.backend = self.backend_label();
        cfg.check()?;
        Ok(cfg)
    }

    pub fn model_id(&self) -> String {
        self.model.clone().unwrap_or_else(|| RunConfig::new("", "").model_id)
    }

    fn backend_label(&self) -> String {
        match self.backend {
            BackendKind::Live => format!("live {}", self.live.base_url),
            BackendKind::Replay => format!("replay {}", self.replay.as_deref().unwrap_or(Path::new("?")).display()),
            BackendKind::Stub => "stub".to_string(),
        }
    }

    /// Gateway for the configured backend. The stub designs `target`.
    pub fn gateway(&self, target: &str) -> Result<Gateway> {
        Ok(match self.backend {
            BackendKind::Replay => {
                let Some(path) = &self.replay else { bail!("replay backend requires a transcript (--replay PATH)") };
                if !path.is_file() {
                    bail!("replay transcript {} does not exist", path.display());
                }
                Gateway::replay(ReplayStore::load(path).with_context(|| format!("loading {}", path.display()))?)
            }
            BackendKind::Live => {
                if std::env::var_os(&self.live.api_key_env).is_none() {
                    bail!("live backend requires the credential variable {} to be set", self.live.api_key_env);
                }
                let mut live = self.live.clone();
                live.model = self.model_id();
                Gateway::new(Backend::Live(live))
            }
            BackendKind::Stub => {
                let stub = if self.stub_all_missing { StubDesigner::all_missing(target) } else { StubDesigner::new(target) };
                Gateway::scripted(stub)
            }
        })
    }
}
