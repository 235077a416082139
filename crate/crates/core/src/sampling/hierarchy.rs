use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{build_upsampler, simplify, SelectionMatrix, SimplifyOptions, UpsamplingMatrix};
use crate::error::{Error, Result};
use crate::field::Trajectory;
use crate::mesh::{
    build_graph, estimate_lambda_max_with, load_mesh, normalized_laplacian, save_mesh,
    scaled_laplacian, Graph, Mesh, PowerIteration,
};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy)]
pub struct HierarchyOptions {
    pub pair_distance: f64,
    /// Use `lambda_max = 2` (the normalized-Laplacian bound) instead of
    /// estimating it.
    pub assume_lmax_2: bool,
    pub power: PowerIteration,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self {
            pair_distance: 0.0,
            assume_lmax_2: false,
            power: PowerIteration::default(),
        }
    }
}

/// One resolution of the hierarchy with its cached graph operators.
#[derive(Debug, Clone)]
pub struct Level {
    pub mesh: Mesh,
    pub graph: Graph,
    pub laplacian: CsrMatrix,
    pub lambda_max: f64,
    pub scaled_laplacian: Arc<CsrMatrix>,
}

impl Level {
    fn new(mesh: Mesh, opts: &HierarchyOptions) -> Result<Self> {
        let graph = build_graph(&mesh);
        let laplacian = normalized_laplacian(&graph);
        let lambda_max = if opts.assume_lmax_2 {
            2.0
        } else {
            estimate_lambda_max_with(&laplacian, opts.power)?
        };
        let scaled = if lambda_max > 0.0 {
            scaled_laplacian(&laplacian, lambda_max)?
        } else {
            // edgeless level: the scaled operator degenerates to -I
            scaled_laplacian(&laplacian, 1.0)?
        };
        Ok(Self {
            mesh,
            graph,
            laplacian,
            lambda_max,
            scaled_laplacian: Arc::new(scaled),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }
}

/// Operators between level `l` (finer) and `l + 1` (coarser).
#[derive(Debug, Clone)]
pub struct Transition {
    pub selection: SelectionMatrix,
    pub upsampling: UpsamplingMatrix,
}

/// Ordered chain of levels, `0` being the input mesh.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<Level>,
    transitions: Vec<Transition>,
    selections_from_0: Vec<SelectionMatrix>,
    lifts_to_0: Vec<CsrMatrix>,
    pair_distance: f64,
    assume_lmax_2: bool,
}

impl Hierarchy {
    /// Repeated simplification down through `level_sizes`.
    pub fn build(mesh: &Mesh, level_sizes: &[usize], opts: HierarchyOptions) -> Result<Self> {
        let n = mesh.n_nodes();
        let mut prev = n;
        for &s in level_sizes {
            if s >= prev || s == 0 {
                return Err(Error::Argument(format!(
                    "level sizes must be strictly decreasing and below {n}: {level_sizes:?}"
                )));
            }
            prev = s;
        }
        let mut meshes = vec![mesh.clone()];
        let mut transitions = Vec::new();
        for &target in level_sizes {
            let fine = meshes.last().expect("level 0 present");
            let s = simplify(
                fine,
                target,
                SimplifyOptions {
                    pair_distance: opts.pair_distance,
                },
            )?;
            let upsampling = build_upsampler(fine, &s.coarse, &s.selection)?;
            transitions.push(Transition {
                selection: s.selection,
                upsampling,
            });
            meshes.push(s.coarse);
        }
        Self::from_parts(meshes, transitions, opts)
    }

    /// Assembles a hierarchy from stored meshes and operators.
    pub fn from_parts(
        meshes: Vec<Mesh>,
        transitions: Vec<Transition>,
        opts: HierarchyOptions,
    ) -> Result<Self> {
        if meshes.is_empty() || transitions.len() + 1 != meshes.len() {
            return Err(Error::Shape(format!(
                "{} meshes need {} transitions, got {}",
                meshes.len(),
                meshes.len().saturating_sub(1),
                transitions.len()
            )));
        }
        for (l, t) in transitions.iter().enumerate() {
            let (nf, nc) = (meshes[l].n_nodes(), meshes[l + 1].n_nodes());
            let u = t.upsampling.matrix();
            if t.selection.n_fine() != nf
                || t.selection.n_coarse() != nc
                || u.rows() != nf
                || u.cols() != nc
                || nc >= nf
            {
                return Err(Error::Shape(format!("transition {l} -> {} has inconsistent sizes", l + 1)));
            }
        }
        let levels = meshes
            .into_iter()
            .map(|m| Level::new(m, &opts))
            .collect::<Result<Vec<_>>>()?;
        let n0 = levels[0].n_nodes();
        let mut selections_from_0 = vec![SelectionMatrix::identity(n0)];
        let mut lifts_to_0 = vec![CsrMatrix::identity(n0)];
        for t in &transitions {
            let sel = t.selection.compose(selections_from_0.last().expect("nonempty"))?;
            let lift = lifts_to_0.last().expect("nonempty").matmul(t.upsampling.matrix())?;
            selections_from_0.push(sel);
            lifts_to_0.push(lift);
        }
        Ok(Self {
            levels,
            transitions,
            selections_from_0,
            lifts_to_0,
            pair_distance: opts.pair_distance,
            assume_lmax_2: opts.assume_lmax_2,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> Result<&Level> {
        self.levels.get(l).ok_or(Error::IndexOutOfRange {
            index: l,
            size: self.levels.len(),
        })
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Operators between `l` and `l + 1`.
    pub fn transition(&self, l: usize) -> Result<&Transition> {
        self.transitions.get(l).ok_or(Error::IndexOutOfRange {
            index: l,
            size: self.transitions.len(),
        })
    }

    /// Composed selection from level 0 to level `l`.
    pub fn selection_from_0(&self, l: usize) -> Result<&SelectionMatrix> {
        self.selections_from_0.get(l).ok_or(Error::IndexOutOfRange {
            index: l,
            size: self.levels.len(),
        })
    }

    /// Composed static lift `U_l^0 = U_1^0 U_2^1 ... U_l^{l-1}`.
    pub fn lift_to_0(&self, l: usize) -> Result<&CsrMatrix> {
        self.lifts_to_0.get(l).ok_or(Error::IndexOutOfRange {
            index: l,
            size: self.levels.len(),
        })
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.levels.iter().map(Level::n_nodes).collect()
    }

    /// Writes meshes, Matrix Market operators and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest {
            level_sizes: self.node_counts(),
            meshes: Vec::new(),
            selections: Vec::new(),
            upsamplings: Vec::new(),
            pair_distance: self.pair_distance,
            assume_lmax_2: self.assume_lmax_2,
        };
        for (l, level) in self.levels.iter().enumerate() {
            let name = format!("level{l}.obj");
            save_mesh(&level.mesh, &dir.join(&name))?;
            manifest.meshes.push(name);
        }
        for (l, t) in self.transitions.iter().enumerate() {
            let d = format!("D_{}_{}.mtx", l, l + 1);
            let u = format!("U_{}_{}.mtx", l + 1, l);
            t.selection.to_csr().write_matrix_market(&dir.join(&d))?;
            t.upsampling.matrix().write_matrix_market(&dir.join(&u))?;
            manifest.selections.push(d);
            manifest.upsamplings.push(u);
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }

    /// Loads a hierarchy from a `manifest.json`; paths inside are relative to it.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let meshes = manifest
            .meshes
            .iter()
            .map(|m| load_mesh(&dir.join(m)))
            .collect::<Result<Vec<_>>>()?;
        if manifest.selections.len() != manifest.upsamplings.len() {
            return Err(Error::Format("manifest lists unequal D and U counts".into()));
        }
        let transitions = manifest
            .selections
            .iter()
            .zip(&manifest.upsamplings)
            .map(|(d, u)| {
                Ok(Transition {
                    selection: SelectionMatrix::from_csr(&CsrMatrix::read_matrix_market(&dir.join(d))?)?,
                    upsampling: UpsamplingMatrix::new(CsrMatrix::read_matrix_market(&dir.join(u))?)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let h = Self::from_parts(
            meshes,
            transitions,
            HierarchyOptions {
                pair_distance: manifest.pair_distance,
                assume_lmax_2: manifest.assume_lmax_2,
                ..HierarchyOptions::default()
            },
        )?;
        if h.node_counts() != manifest.level_sizes {
            return Err(Error::Format(format!(
                "manifest level sizes {:?} do not match files {:?}",
                manifest.level_sizes,
                h.node_counts()
            )));
        }
        Ok(h)
    }
}

/// JSON index of a saved hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub level_sizes: Vec<usize>,
    pub meshes: Vec<String>,
    /// `D_l^{l+1}` files, level `l` to `l + 1`.
    pub selections: Vec<String>,
    /// `U_{l+1}^l` files, level `l + 1` to `l`.
    pub upsamplings: Vec<String>,
    pub pair_distance: f64,
    pub assume_lmax_2: bool,
}

/// Restricts a level-0 trajectory to the nodes of `level`.
pub fn downsample_states(states: &Trajectory, hierarchy: &Hierarchy, level: usize) -> Result<Trajectory> {
    let sel = hierarchy.selection_from_0(level)?;
    if states.nodes() != sel.n_fine() {
        return Err(Error::Shape(format!(
            "trajectory has {} nodes, level 0 has {}",
            states.nodes(),
            sel.n_fine()
        )));
    }
    states.select_nodes(sel.kept())
}
