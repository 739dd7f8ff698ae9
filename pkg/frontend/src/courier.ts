// Courier workspace view-model. Holds what the screen shows and nothing
// else; every field is rebuilt from gateway responses so the view can be
// reproduced from the API alone.

import type { CourierApi, TripAction } from "./api.js";
import { errorText } from "./format.js";
import type {
  Availability,
  DeliveryView,
  LocationNote,
  PreferencesView,
} from "./types.js";

export interface CourierBuckets {
  new: DeliveryView[];
  inProgress: DeliveryView[];
  done: DeliveryView[];
}

export interface CourierState {
  availability: Availability | null;
  buckets: CourierBuckets;
  settings: PreferencesView | null;
  notes: LocationNote[];
  position: { lon: number; lat: number } | null;
  lastError: string | null;
}

const NOTE_RADIUS_METERS = 500;

export class CourierWorkspace {
  readonly state: CourierState = {
    availability: null,
    buckets: { new: [], inProgress: [], done: [] },
    settings: null,
    notes: [],
    position: null,
    lastError: null,
  };

  constructor(
    private readonly api: CourierApi,
    private readonly onChange: () => void = () => {},
  ) {}

  /** Accept/reject taps are disabled while the courier is offline. */
  get newBucketDisabled(): boolean {
    return this.state.availability !== "ONLINE";
  }

  private async run<T>(op: () => Promise<T>): Promise<T> {
    try {
      const out = await op();
      this.state.lastError = null;
      this.onChange();
      return out;
    } catch (err) {
      this.state.lastError = errorText(err);
      this.onChange();
      throw err;
    }
  }

  /** One poll: re-pull all three buckets. */
  refresh(): Promise<void> {
    return this.run(async () => {
      const [fresh, active, finished] = await Promise.all([
        this.api.listBucket("new"),
        this.api.listBucket("in-progress"),
        this.api.listBucket("done"),
      ]);
      this.state.buckets = { new: fresh, inProgress: active, done: finished };
    });
  }

  accept(deliveryId: string): Promise<void> {
    return this.run(async () => {
      await this.api.accept(deliveryId);
      await this.reloadBuckets();
    });
  }

  reject(deliveryId: string): Promise<void> {
    return this.run(async () => {
      await this.api.reject(deliveryId);
      await this.reloadBuckets();
    });
  }

  cancel(deliveryId: string): Promise<void> {
    return this.run(async () => {
      await this.api.cancel(deliveryId);
      await this.reloadBuckets();
    });
  }

  advance(deliveryId: string, action: TripAction): Promise<void> {
    return this.run(async () => {
      await this.api.tripAction(deliveryId, action);
      await this.reloadBuckets();
    });
  }

  reportIssue(deliveryId: string, code: string, note?: string): Promise<void> {
    return this.run(async () => {
      await this.api.reportIssue(deliveryId, code, note);
      await this.reloadBuckets();
    });
  }

  setAvailability(availability: Availability): Promise<void> {
    return this.run(async () => {
      const rec = await this.api.setAvailability(availability);
      this.state.availability = rec.availability;
    });
  }

  /** Report the device position and refresh the nearby notes map. */
  moveTo(lon: number, lat: number): Promise<void> {
    return this.run(async () => {
      await this.api.setPosition(lon, lat);
      this.state.position = { lon, lat };
      this.state.notes = await this.api.notesNear(lon, lat, NOTE_RADIUS_METERS);
    });
  }

  loadSettings(): Promise<void> {
    return this.run(async () => {
      this.state.settings = await this.api.getSettings();
    });
  }

  saveSettings(partial: Partial<PreferencesView>): Promise<void> {
    return this.run(async () => {
      this.state.settings = await this.api.patchSettings(partial);
    });
  }

  addNote(text: string): Promise<void> {
    return this.run(async () => {
      const pos = this.state.position;
      if (!pos) throw new Error("no position reported yet");
      await this.api.createNote(pos.lon, pos.lat, text);
      this.state.notes = await this.api.notesNear(pos.lon, pos.lat, NOTE_RADIUS_METERS);
    });
  }

  reactToNote(locationNoteId: string, emoji: string): Promise<void> {
    return this.run(async () => {
      const updated = await this.api.react(locationNoteId, emoji);
      this.state.notes = this.state.notes.map((n) =>
        n.locationNoteId === updated.locationNoteId ? updated : n,
      );
    });
  }

  private async reloadBuckets(): Promise<void> {
    const [fresh, active, finished] = await Promise.all([
      this.api.listBucket("new"),
      this.api.listBucket("in-progress"),
      this.api.listBucket("done"),
    ]);
    this.state.buckets = { new: fresh, inProgress: active, done: finished };
  }
}
