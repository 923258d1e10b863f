/** JSON shapes exchanged with the pipeline service. The UI never computes
 * metrics or layout itself: everything shown comes from these payloads. */

export type ShotSizeToken = "close-up" | "medium" | "wide";

export const SHOT_SIZES: readonly ShotSizeToken[] = ["close-up", "medium", "wide"];

export interface CharacterJson {
  name: string;
  appearance: string;
}

export interface ShotJson {
  index: number;
  size: ShotSizeToken;
  description: string;
  referenced_characters: string[];
}

export interface PlanJson {
  scene_description: string;
  setting: string;
  characters: CharacterJson[];
  shots: ShotJson[];
}

export interface ViolationJson {
  rule: string;
  field: string;
  message: string;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobJson {
  id: string;
  kind: string;
  state: JobState;
  outputs: Record<string, unknown> | null;
  error: string | null;
}

export interface SceneResultJson {
  plan_id: string;
  seed: number;
  count_ok: boolean;
  frame_count: number;
  planned_shots: number;
  cut_rows: number[];
  sheet_url: string;
  frame_urls: string[];
}

export interface SurveyItemJson {
  item_id: string;
  scene_id: string;
  left_method: string;
  right_method: string;
  aspect: string;
  question: string;
  time_limit_seconds: number;
}

export interface SurveyTallyJson {
  per_aspect: Record<string, { wins_ours: number; total: number }>;
  percentages: Record<string, number>;
  abstentions: number;
}
