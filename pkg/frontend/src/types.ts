/** Shared wire types mirroring the server's documented JSON formats. */

export interface GridDoc {
  rows: number;
  cols: number;
  slices: number;
  pixel_spacing: [number, number]; // (row, col) mm
  slice_spacing: number;
  origin: [number, number, number];
  col_cos: [number, number, number];
  row_cos: [number, number, number];
}

export interface RoiDoc {
  number: number;
  name: string;
  color: [number, number, number];
  rle: number[];
}

export interface SegmentationDoc {
  format: string;
  series_id: string;
  grid: GridDoc;
  version: number;
  parent_version: number | null;
  provenance: { source: string; model_id?: string | null; created_at?: string };
  rois: RoiDoc[];
}

export interface VersionInfo {
  version: number;
  parent_version: number | null;
  provenance: { source: string } | null;
  roi_names: string[];
}

export interface SeriesMeta {
  series_id: string;
  study_id: string;
  modality: string;
  patient_ref: string;
  grid: GridDoc;
  intensity_range: [number, number];
  segmentations: VersionInfo[];
}

export interface ModelInfo {
  model_id: string;
  name: string;
  version: string;
  image_ref: string;
  label_map: Record<string, number>;
}

export interface JobSnapshot {
  job_id: string;
  state: 'Queued' | 'Provisioning' | 'Running' | 'Postprocessing' | 'Completed' | 'Failed';
  result_version: number | null;
  error: string | null;
  transitions: { state: string; at: string; t_ns: number }[];
}

export interface ReportEntry {
  roi_name: string;
  dice: number;
  empty_pair: boolean;
  pred_voxels: number;
  gt_voxels: number;
  intersection_voxels: number;
  discrepancy_voxels: number;
  matched: boolean;
}

export interface EvaluationReport {
  mean_dice: number;
  matched_count: number;
  unmatched_count: number;
  entries: ReportEntry[];
  discrepancy_version?: number;
  report_id?: string;
}

export type BrushShape = 'sphere3d' | 'disk2d';
export type BrushMode = 'paint' | 'erase';

export interface BrushOp {
  roi_number: number;
  center: [number, number, number]; // world mm
  radius: number; // mm
  shape: BrushShape;
  mode: BrushMode;
  slice?: number;
  roi?: { name: string; color: [number, number, number] };
}

/** Everything the renderer needs to draw one slice. */
export interface ViewportState {
  sliceIndex: number;
  windowCenter: number;
  windowWidth: number;
  roiVisibility: Map<number, boolean>;
  roiOpacity: Map<number, number>; // 0..1
  tool: { kind: 'brush' | 'sphere' | 'eraser'; radiusMm: number };
  discrepancyOverlay: boolean;
}
